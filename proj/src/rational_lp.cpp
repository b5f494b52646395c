#include "rational_lp.hpp"

#include <optional>

namespace fairpart::lp {

namespace {

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_((rows + 1) * (cols + 1)), basis_(rows) {}

  mpq_class& at(std::size_t i, std::size_t j) { return data_[i * (cols_ + 1) + j]; }
  mpq_class& rhs(std::size_t i) { return at(i, cols_); }
  /// Objective row holds reduced costs; its rhs holds minus the objective.
  mpq_class& cost(std::size_t j) { return at(rows_, j); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::vector<std::size_t>& basis() { return basis_; }

  void pivot(std::size_t r, std::size_t j) {
    const mpq_class piv = at(r, j);
    for (std::size_t c = 0; c <= cols_; ++c)
      if (sgn(at(r, c)) != 0) at(r, c) /= piv;
    for (std::size_t i = 0; i <= rows_; ++i) {
      if (i == r || sgn(at(i, j)) == 0) continue;
      const mpq_class f = at(i, j);
      for (std::size_t c = 0; c <= cols_; ++c)
        if (sgn(at(r, c)) != 0) at(i, c) -= f * at(r, c);
    }
    basis_[r] = j;
    ++pivots_;
  }

  /// Runs Bland's rule over columns [0, limit). Returns false if unbounded.
  bool optimize(std::size_t limit) {
    while (true) {
      std::optional<std::size_t> enter;
      for (std::size_t j = 0; j < limit; ++j)
        if (sgn(cost(j)) < 0) {
          enter = j;
          break;
        }
      if (!enter) return true;
      std::optional<std::size_t> leave;
      mpq_class best;
      for (std::size_t i = 0; i < rows_; ++i) {
        if (sgn(at(i, *enter)) <= 0) continue;
        mpq_class ratio = rhs(i) / at(i, *enter);
        if (!leave || ratio < best || (ratio == best && basis_[i] < basis_[*leave])) {
          leave = i;
          best = ratio;
        }
      }
      if (!leave) return false;
      pivot(*leave, *enter);
    }
  }

  /// Drops row r (used for redundant equality rows).
  void drop_row(std::size_t r) {
    const std::size_t width = cols_ + 1;
    data_.erase(data_.begin() + static_cast<std::ptrdiff_t>(r * width),
                data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
    basis_.erase(basis_.begin() + static_cast<std::ptrdiff_t>(r));
    --rows_;
  }

  std::size_t pivots() const { return pivots_; }

 private:
  std::size_t rows_, cols_;
  std::vector<mpq_class> data_;
  std::vector<std::size_t> basis_;
  std::size_t pivots_ = 0;
};

}  // namespace

Result solve(Problem problem) {
  const std::size_t m = problem.rows, n = problem.cols;
  for (std::size_t i = 0; i < m; ++i)
    if (sgn(problem.b[i]) < 0) {
      problem.b[i] = -problem.b[i];
      for (std::size_t j = 0; j < n; ++j) problem.at(i, j) = -problem.at(i, j);
    }

  // Phase 1: one artificial per row, minimize their sum.
  Tableau t(m, n + m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) t.at(i, j) = problem.at(i, j);
    t.at(i, n + i) = 1;
    t.rhs(i) = problem.b[i];
    t.basis()[i] = n + i;
  }
  for (std::size_t j = 0; j < n; ++j) {
    mpq_class s = 0;
    for (std::size_t i = 0; i < m; ++i) s -= problem.at(i, j);
    t.cost(j) = s;
  }
  {
    mpq_class s = 0;
    for (std::size_t i = 0; i < m; ++i) s -= problem.b[i];
    t.rhs(m) = s;
  }
  t.optimize(n + m);

  Result result;
  if (sgn(t.rhs(t.rows())) != 0) {
    result.status = Status::infeasible;
    result.pivots = t.pivots();
    return result;
  }

  // Drive remaining artificials out of the basis; rows with no structural
  // entry are redundant.
  for (std::size_t i = 0; i < t.rows();) {
    if (t.basis()[i] < n) {
      ++i;
      continue;
    }
    std::optional<std::size_t> col;
    for (std::size_t j = 0; j < n; ++j)
      if (sgn(t.at(i, j)) != 0) {
        col = j;
        break;
      }
    if (col) {
      t.pivot(i, *col);
      ++i;
    } else {
      t.drop_row(i);
    }
  }

  // Phase 2 reduced costs over structural columns; artificial columns are
  // excluded from entering by the optimize limit.
  for (std::size_t j = 0; j < n + m; ++j) t.cost(j) = j < n ? problem.c[j] : mpq_class(0);
  t.rhs(t.rows()) = 0;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const mpq_class cb = problem.c[t.basis()[i]];
    if (sgn(cb) == 0) continue;
    for (std::size_t j = 0; j <= n + m; ++j)
      if (sgn(t.at(i, j)) != 0) t.at(t.rows(), j) -= cb * t.at(i, j);
  }
  if (!t.optimize(n)) {
    result.status = Status::unbounded;
    result.pivots = t.pivots();
    return result;
  }

  result.status = Status::optimal;
  result.x.assign(n, mpq_class(0));
  for (std::size_t i = 0; i < t.rows(); ++i) result.x[t.basis()[i]] = t.rhs(i);
  result.objective = -t.rhs(t.rows());
  result.pivots = t.pivots();
  return result;
}

}  // namespace fairpart::lp
