#pragma once

// Dense two-phase simplex over exact rationals with Bland's rule. Intended
// for the small instances the oracle handles.

#include <gmpxx.h>

#include <vector>

namespace fairpart::lp {

enum class Status { optimal, infeasible, unbounded };

/// min c'x  subject to  A x = b, x >= 0. A is row-major m x n.
struct Problem {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<mpq_class> a;
  std::vector<mpq_class> b;
  std::vector<mpq_class> c;

  mpq_class& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
};

struct Result {
  Status status = Status::infeasible;
  std::vector<mpq_class> x;
  mpq_class objective;
  std::size_t pivots = 0;
};

Result solve(Problem problem);

}  // namespace fairpart::lp
