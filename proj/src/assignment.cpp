#include "modecon/assignment.hpp"

#include "modecon/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace modecon {

namespace {

// Row potentials u and column potentials v with cost(i, j) - u(i) - v(j) >= 0,
// plus an optimal matching on the tight edges. 0-based port of the classic
// O(n^3) shortest augmenting path formulation.
void hungarian(const Matrix& c, Vector& u, Vector& v, std::vector<int>& row_of_col) {
  const int n = static_cast<int>(c.rows());
  const double inf = std::numeric_limits<double>::infinity();
  u = Vector::Zero(n + 1);
  v = Vector::Zero(n + 1);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      int i0 = p[static_cast<std::size_t>(j0)], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        double cur = c(i0 - 1, j - 1) - u(i0) - v(j);
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u(p[static_cast<std::size_t>(j)]) += delta;
          v(j) -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  row_of_col.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) row_of_col[static_cast<std::size_t>(j) - 1] = p[static_cast<std::size_t>(j)] - 1;
}

// Rewrites a perfect matching on the tight graph into the lexicographically
// smallest one. Row i takes the smallest tight column that still leaves a perfect
// matching for the rows after it, found as an alternating path that frees the
// column row i held before.
class LexMatcher {
 public:
  LexMatcher(std::vector<std::vector<int>> adj, std::vector<int> col_of_row)
      : adj_(std::move(adj)), col_of_row_(std::move(col_of_row)), row_of_col_(col_of_row_.size()) {
    for (std::size_t i = 0; i < col_of_row_.size(); ++i)
      row_of_col_[static_cast<std::size_t>(col_of_row_[i])] = static_cast<int>(i);
  }

  std::vector<int> run() {
    const int n = static_cast<int>(col_of_row_.size());
    fixed_.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      for (int j : adj_[static_cast<std::size_t>(i)]) {
        if (fixed_[static_cast<std::size_t>(j)]) continue;
        if (col_of_row_[static_cast<std::size_t>(i)] == j) break;
        target_ = col_of_row_[static_cast<std::size_t>(i)];
        banned_ = j;
        visited_.assign(static_cast<std::size_t>(n), 0);
        if (reroute(row_of_col_[static_cast<std::size_t>(j)])) {
          col_of_row_[static_cast<std::size_t>(i)] = j;
          row_of_col_[static_cast<std::size_t>(j)] = i;
          break;
        }
      }
      fixed_[static_cast<std::size_t>(col_of_row_[static_cast<std::size_t>(i)])] = 1;
    }
    return col_of_row_;
  }

 private:
  // Moves row r off its column onto another free-able column, ending at target_.
  bool reroute(int r) {
    for (int c : adj_[static_cast<std::size_t>(r)]) {
      if (c == banned_ || fixed_[static_cast<std::size_t>(c)] || visited_[static_cast<std::size_t>(c)]) continue;
      visited_[static_cast<std::size_t>(c)] = 1;
      if (c == target_ || reroute(row_of_col_[static_cast<std::size_t>(c)])) {
        col_of_row_[static_cast<std::size_t>(r)] = c;
        row_of_col_[static_cast<std::size_t>(c)] = r;
        return true;
      }
    }
    return false;
  }

  std::vector<std::vector<int>> adj_;
  std::vector<int> col_of_row_, row_of_col_;
  std::vector<char> fixed_, visited_;
  int target_ = -1, banned_ = -1;
};

}  // namespace

Assignment solve_assignment(const Matrix& cost) {
  if (cost.rows() != cost.cols())
    throw DimensionError("assignment needs a square cost matrix, got " + std::to_string(cost.rows()) + "x" +
                         std::to_string(cost.cols()));
  if (!cost.allFinite()) throw NumericalError("assignment cost matrix has non-finite entries");
  const int n = static_cast<int>(cost.rows());
  Assignment a;
  if (n == 0) return a;

  Vector u, v;
  std::vector<int> row_of_col;
  hungarian(cost, u, v, row_of_col);
  std::vector<int> col_of_row(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) col_of_row[static_cast<std::size_t>(row_of_col[static_cast<std::size_t>(j)])] = j;

  const double eps = 1e-10 * std::max(1.0, cost.cwiseAbs().maxCoeff());
  std::vector<std::vector<int>> tight(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (cost(i, j) - u(i + 1) - v(j + 1) <= eps || col_of_row[static_cast<std::size_t>(i)] == j)
        tight[static_cast<std::size_t>(i)].push_back(j);

  a.perm = LexMatcher(std::move(tight), std::move(col_of_row)).run();
  for (int i = 0; i < n; ++i) a.total_cost += cost(i, a.perm[static_cast<std::size_t>(i)]);
  return a;
}

std::vector<int> nearest_permutation(const Matrix& d) { return solve_assignment(-d).perm; }

}  // namespace modecon
