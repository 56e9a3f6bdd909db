#include "stoiht/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include <fmt/format.h>
#include <fmt/os.h>

namespace stoiht {

SupportSet::SupportSet(std::vector<Index> indices) : indices_(std::move(indices)) {
  std::sort(indices_.begin(), indices_.end());
  if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end()) {
    throw std::invalid_argument("SupportSet: duplicate index");
  }
  if (!indices_.empty() && indices_.front() < 0) {
    throw std::invalid_argument("SupportSet: negative index");
  }
}

SupportSet SupportSet::first(Index count) {
  std::vector<Index> idx(static_cast<std::size_t>(std::max<Index>(count, 0)));
  std::iota(idx.begin(), idx.end(), Index{0});
  return SupportSet(std::move(idx));
}

bool SupportSet::contains(Index j) const {
  return std::binary_search(indices_.begin(), indices_.end(), j);
}

SupportSet SupportSet::unite(const SupportSet& other) const {
  SupportSet out;
  out.indices_.reserve(indices_.size() + other.indices_.size());
  std::set_union(indices_.begin(), indices_.end(), other.indices_.begin(),
                 other.indices_.end(), std::back_inserter(out.indices_));
  return out;
}

SupportSet SupportSet::intersect(const SupportSet& other) const {
  SupportSet out;
  std::set_intersection(indices_.begin(), indices_.end(),
                        other.indices_.begin(), other.indices_.end(),
                        std::back_inserter(out.indices_));
  return out;
}

ProblemInstance::ProblemInstance(Matrix a, Vector x_true, Vector z,
                                 Index sparsity, Index block_size,
                                 double noise_std, std::uint64_t seed)
    : a_(std::move(a)),
      x_true_(std::move(x_true)),
      z_(std::move(z)),
      sparsity_(sparsity),
      block_size_(block_size),
      noise_std_(noise_std),
      seed_(seed) {
  if (a_.rows() <= 0 || a_.cols() <= 0) {
    throw std::invalid_argument("ProblemInstance: empty measurement matrix");
  }
  if (x_true_.size() != a_.cols() || z_.size() != a_.rows()) {
    throw std::invalid_argument("ProblemInstance: dimension mismatch");
  }
  if (block_size_ <= 0 || a_.rows() % block_size_ != 0) {
    throw std::invalid_argument(
        fmt::format("ProblemInstance: block size {} does not divide m = {}",
                    block_size_, a_.rows()));
  }
  if (sparsity_ < 0 || sparsity_ > a_.cols()) {
    throw std::invalid_argument("ProblemInstance: sparsity out of range");
  }
  if ((x_true_.array() != 0.0).count() > sparsity_) {
    throw std::invalid_argument("ProblemInstance: x_true is not s-sparse");
  }
  // Same accumulation order as residual_norm, so y - A x_true == z exactly
  // when z == 0.
  y_ = apply_rows(a_, 0, a_.rows(), x_true_) + z_;
}

SupportSet ProblemInstance::true_support() const {
  std::vector<Index> idx;
  for (Index j = 0; j < x_true_.size(); ++j) {
    if (x_true_[j] != 0.0) idx.push_back(j);
  }
  return SupportSet(std::move(idx));
}

BlockView ProblemInstance::block(Index i) const {
  if (i < 0 || i >= num_blocks()) {
    throw std::out_of_range(
        fmt::format("block index {} outside [0, {})", i, num_blocks()));
  }
  return BlockView{i, i * block_size_, block_size_};
}

ProblemInstance generate_instance(Index n, Index m, Index s, Index block_size,
                                  double noise_std, std::uint64_t seed) {
  if (n <= 0 || m <= 0 || block_size <= 0) {
    throw std::invalid_argument("generate_instance: dimensions must be positive");
  }
  if (s < 0 || s > n) {
    throw std::invalid_argument("generate_instance: need 0 <= s <= n");
  }
  if (m % block_size != 0) {
    throw std::invalid_argument("generate_instance: block size must divide m");
  }
  if (!(noise_std >= 0.0)) {
    throw std::invalid_argument("generate_instance: noise_std must be >= 0");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> entry(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
  Matrix a(m, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < m; ++i) a(i, j) = entry(rng);
  }

  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<Index> support;
  support.reserve(static_cast<std::size_t>(s));
  std::sample(all.begin(), all.end(), std::back_inserter(support), s, rng);

  std::normal_distribution<double> standard(0.0, 1.0);
  Vector x = Vector::Zero(n);
  for (Index j : support) {
    double v = 0.0;
    while (v == 0.0) v = standard(rng);
    x[j] = v;
  }

  Vector z = Vector::Zero(m);
  if (noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_std);
    for (Index i = 0; i < m; ++i) z[i] = noise(rng);
  }
  return ProblemInstance(std::move(a), std::move(x), std::move(z), s,
                         block_size, noise_std, seed);
}

SupportSet largest_support(const Vector& a, Index s) {
  const Index n = a.size();
  if (s < 0 || s > n) {
    throw std::invalid_argument("largest_support: need 0 <= s <= n");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto larger = [&a](Index i, Index j) {
    const double ai = std::abs(a[i]);
    const double aj = std::abs(a[j]);
    return ai > aj || (ai == aj && i < j);
  };
  std::nth_element(order.begin(), order.begin() + s, order.end(), larger);
  order.resize(static_cast<std::size_t>(s));
  return SupportSet(std::move(order));
}

Vector hard_threshold(const Vector& a, Index s) {
  return project(a, largest_support(a, s));
}

Vector project(const Vector& a, const SupportSet& support) {
  if (!support.fits(a.size())) {
    throw std::out_of_range("project: support index outside the vector");
  }
  Vector out = Vector::Zero(a.size());
  for (Index j : support) out[j] = a[j];
  return out;
}

Vector apply_rows(const Matrix& a, Index row_begin, Index rows,
                  const Vector& x) {
  Vector out = Vector::Zero(rows);
  for (Index j = 0; j < x.size(); ++j) {
    if (x[j] != 0.0) out.noalias() += x[j] * a.col(j).segment(row_begin, rows);
  }
  return out;
}

Vector block_residual(const ProblemInstance& problem, const Vector& x,
                      Index block) {
  const BlockView view = problem.block(block);
  return problem.y().segment(view.row_begin, view.rows) -
         apply_rows(problem.a(), view.row_begin, view.rows, x);
}

double residual_norm(const ProblemInstance& problem, const Vector& x) {
  return (problem.y() - apply_rows(problem.a(), 0, problem.m(), x)).norm();
}

namespace {

void write_row(fmt::ostream& out, const auto& values) {
  for (Index j = 0; j < values.size(); ++j) {
    if (j > 0) out.print(" ");
    out.print("{:.17g}", values[j]);
  }
  out.print("\n");
}

}  // namespace

void save_instance(const ProblemInstance& problem,
                   const std::filesystem::path& path) {
  try {
    auto out = fmt::output_file(path.string());
    out.print("# stoiht instance v1: header `n m s b noise_std seed`, then m rows "
              "of A, then x_true, then z; indices are 0-based\n");
    out.print("{} {} {} {} {:.17g} {}\n", problem.n(), problem.m(),
              problem.sparsity(), problem.block_size(), problem.noise_std(),
              problem.seed());
    for (Index i = 0; i < problem.m(); ++i) write_row(out, problem.a().row(i));
    write_row(out, problem.x_true());
    write_row(out, problem.z());
  } catch (const std::system_error& e) {
    throw std::runtime_error(
        fmt::format("cannot write instance '{}': {}", path.string(), e.what()));
  }
}

ProblemInstance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(
        fmt::format("cannot open instance '{}'", path.string()));
  }
  std::stringstream body;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '#') continue;
    body << line << '\n';
  }
  auto fail = [&path](const char* what) {
    return std::runtime_error(
        fmt::format("malformed instance '{}': {}", path.string(), what));
  };

  Index n = 0, m = 0, s = 0, b = 0;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  if (!(body >> n >> m >> s >> b >> noise_std >> seed)) throw fail("bad header");
  if (n <= 0 || m <= 0) throw fail("nonpositive dimensions");

  Matrix a(m, n);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (!(body >> a(i, j))) throw fail("truncated matrix");
    }
  }
  Vector x(n), z(m);
  for (Index j = 0; j < n; ++j) {
    if (!(body >> x[j])) throw fail("truncated x_true");
  }
  for (Index i = 0; i < m; ++i) {
    if (!(body >> z[i])) throw fail("truncated z");
  }
  try {
    return ProblemInstance(std::move(a), std::move(x), std::move(z), s, b,
                           noise_std, seed);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(
        fmt::format("invalid instance '{}': {}", path.string(), e.what()));
  }
}

}  // namespace stoiht
