// Copyright 2026 The kfacsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "kfacsim/errors.hpp"
#include "kfacsim/linalg/matrix.hpp"

namespace kfacsim::linalg {

// Order-fixed pairwise reduction.
//
// Floating-point addition is not associative, so "sum over samples" only has
// one bit pattern if the association order is pinned.  Everything here uses
// one canonical tree over the global index range [0, n): a node [lo, hi)
// splits at lo + (hi-lo)/2, and the node value is left + right.
//
// A simulated worker that owns a contiguous slice of the range computes the
// values of the maximal tree nodes covered by its slice (tree_cover), and the
// simulated allreduce stitches those pieces back together by re-evaluating
// the tree (TreeAccumulator).  The combined result is bit-for-bit the value a
// single process would have computed over the whole range, for any worker
// count and any slice boundaries.

inline double pairwise_sum(const std::vector<double>& v, std::size_t lo,
                           std::size_t hi) {
  const std::size_t len = hi - lo;
  if (len == 0) return 0.0;
  if (len == 1) return v[lo];
  const std::size_t mid = lo + len / 2;
  return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}

inline double pairwise_sum(const std::vector<double>& v) {
  return pairwise_sum(v, 0, v.size());
}

// Leaf-function variant with the identical reduction tree, so callers can
// evaluate a subtree of a larger index space without materializing a vector.
template <typename LeafFn>
double pairwise_scalar_sum(std::size_t lo, std::size_t hi, LeafFn&& leaf) {
  const std::size_t len = hi - lo;
  if (len == 0) return 0.0;
  if (len == 1) return leaf(lo);
  const std::size_t mid = lo + len / 2;
  return pairwise_scalar_sum(lo, mid, leaf) +
         pairwise_scalar_sum(mid, hi, leaf);
}

template <typename LeafFn>
DenseMatrix pairwise_matrix_sum(std::size_t lo, std::size_t hi, LeafFn&& leaf) {
  const std::size_t len = hi - lo;
  if (len == 1) return leaf(lo);
  const std::size_t mid = lo + len / 2;
  DenseMatrix left = pairwise_matrix_sum(lo, mid, leaf);
  DenseMatrix right = pairwise_matrix_sum(mid, hi, leaf);
  add_inplace(left, right);
  return left;
}

// Pairwise-reduced X^T * Y over rows: sum_k outer(x_k, y_k).  Same value
// class as matmul_tn but with the reduction-tree accumulation order.
inline DenseMatrix pairwise_row_outer(const DenseMatrix& x,
                                      const DenseMatrix& y) {
  if (x.rows() != y.rows()) {
    throw DimensionError("pairwise_row_outer: row counts differ");
  }
  if (x.rows() == 0) {
    throw DimensionError("pairwise_row_outer: no rows to reduce");
  }
  return pairwise_matrix_sum(0, x.rows(), [&](std::size_t k) {
    DenseMatrix w(x.cols(), y.cols());
    for (std::size_t i = 0; i < x.cols(); ++i) {
      const double xi = x(k, i);
      for (std::size_t j = 0; j < y.cols(); ++j) w(i, j) = xi * y(k, j);
    }
    return w;
  });
}

// Half-open index span; a node of the canonical reduction tree.
struct IndexSpan {
  std::size_t lo = 0;
  std::size_t hi = 0;
  bool operator<(const IndexSpan& o) const {
    return lo != o.lo ? lo < o.lo : hi < o.hi;
  }
  bool operator==(const IndexSpan& o) const {
    return lo == o.lo && hi == o.hi;
  }
};

namespace detail {

inline void tree_cover_rec(std::size_t node_lo, std::size_t node_hi,
                           std::size_t lo, std::size_t hi,
                           std::vector<IndexSpan>& out) {
  if (node_hi <= lo || hi <= node_lo) return;  // disjoint
  if (lo <= node_lo && node_hi <= hi) {
    out.push_back({node_lo, node_hi});
    return;
  }
  const std::size_t mid = node_lo + (node_hi - node_lo) / 2;
  tree_cover_rec(node_lo, mid, lo, hi, out);
  tree_cover_rec(mid, node_hi, lo, hi, out);
}

}  // namespace detail

// The maximal tree nodes of the canonical tree over [0, total) that exactly
// tile [lo, hi).  Returned in ascending index order.
inline std::vector<IndexSpan> tree_cover(std::size_t total, std::size_t lo,
                                         std::size_t hi) {
  if (lo > hi || hi > total) {
    throw DimensionError("tree_cover: span out of range");
  }
  std::vector<IndexSpan> out;
  if (lo != hi && total > 0) detail::tree_cover_rec(0, total, lo, hi, out);
  return out;
}

// Re-evaluates the canonical tree over [0, total) from per-node partial
// values.  Every leaf must be covered by exactly one supplied piece, and each
// piece must be a genuine tree node; either violation throws.
template <typename T, typename AddFn>
class TreeAccumulator {
 public:
  TreeAccumulator(std::size_t total, AddFn add)
      : total_(total), add_(std::move(add)) {}

  void put(IndexSpan span, T value) {
    if (!pieces_.emplace(span, std::move(value)).second) {
      throw ConsistencyError("TreeAccumulator: duplicate piece");
    }
  }

  T eval() const { return eval_node(0, total_); }

 private:
  T eval_node(std::size_t lo, std::size_t hi) const {
    auto it = pieces_.find(IndexSpan{lo, hi});
    if (it != pieces_.end()) return it->second;
    if (hi - lo <= 1) {
      throw ConsistencyError("TreeAccumulator: uncovered leaf");
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    T left = eval_node(lo, mid);
    T right = eval_node(mid, hi);
    add_(left, right);
    return left;
  }

  std::size_t total_;
  AddFn add_;
  std::map<IndexSpan, T> pieces_;
};

inline void tree_add(double& into, const double& v) { into += v; }
inline void tree_add(DenseMatrix& into, const DenseMatrix& v) {
  add_inplace(into, v);
}

// Convenience: combine per-worker pieces of a sharded sum back into the
// single-process value.  `pieces` holds (span, value) pairs from all workers.
template <typename T>
T combine_tree_pieces(std::size_t total,
                      const std::vector<std::pair<IndexSpan, T>>& pieces) {
  TreeAccumulator<T, void (*)(T&, const T&)> acc(
      total, static_cast<void (*)(T&, const T&)>(&tree_add));
  for (const auto& [span, value] : pieces) acc.put(span, value);
  return acc.eval();
}

}  // namespace kfacsim::linalg
