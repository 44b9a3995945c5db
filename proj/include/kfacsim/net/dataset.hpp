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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kfacsim/errors.hpp"
#include "kfacsim/linalg/matrix.hpp"
#include "kfacsim/util/rng.hpp"

namespace kfacsim::net {

// A batch of examples.  `labels` carries class indices for classification;
// `targets` carries a dense regression target matrix instead (exactly one of
// the two is populated).
struct Batch {
  linalg::DenseMatrix inputs;  // n x features
  std::vector<int> labels;
  linalg::DenseMatrix targets;

  std::size_t size() const { return inputs.rows(); }
  bool regression() const { return labels.empty(); }
};

// Contiguous row slice [lo, hi) of a batch.
inline Batch slice(const Batch& b, std::size_t lo, std::size_t hi) {
  if (lo >= hi || hi > b.size()) {
    throw DimensionError("slice: bad range [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + ") of " +
                         std::to_string(b.size()));
  }
  Batch out;
  out.inputs = linalg::DenseMatrix(hi - lo, b.inputs.cols());
  for (std::size_t r = lo; r < hi; ++r) {
    for (std::size_t c = 0; c < b.inputs.cols(); ++c) {
      out.inputs(r - lo, c) = b.inputs(r, c);
    }
  }
  if (!b.labels.empty()) {
    out.labels.assign(b.labels.begin() + static_cast<std::ptrdiff_t>(lo),
                      b.labels.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  if (!b.targets.empty()) {
    out.targets = linalg::DenseMatrix(hi - lo, b.targets.cols());
    for (std::size_t r = lo; r < hi; ++r) {
      for (std::size_t c = 0; c < b.targets.cols(); ++c) {
        out.targets(r - lo, c) = b.targets(r, c);
      }
    }
  }
  return out;
}

enum class DatasetKind { blobs, two_spirals, tiny_images };

inline DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "blobs") return DatasetKind::blobs;
  if (s == "two_spirals") return DatasetKind::two_spirals;
  if (s == "tiny_images") return DatasetKind::tiny_images;
  throw ConfigError("dataset.kind: unknown value '" + s + "'");
}

inline std::string dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::blobs: return "blobs";
    case DatasetKind::two_spirals: return "two_spirals";
    case DatasetKind::tiny_images: return "tiny_images";
  }
  return "?";
}

struct Dataset {
  Batch train;
  Batch valid;
  std::size_t classes = 0;
  // Input geometry, for convolutional models (flat data uses height=width=1).
  std::size_t channels = 1, height = 1, width = 1;
};

namespace detail {

struct RawExample {
  std::vector<double> x;
  int label;
};

// Deterministic 80/20 split: every fifth example (i % 5 == 4) goes to the
// validation set, so both splits sample the generation sequence uniformly.
// The training set is then shuffled once so that sequential mini-batches are
// not ordered by generation structure.
inline Dataset assemble(std::vector<RawExample> raw, std::size_t classes,
                        util::Rng& rng) {
  std::vector<std::size_t> train_idx, valid_idx;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    (i % 5 == 4 ? valid_idx : train_idx).push_back(i);
  }
  rng.shuffle(train_idx);

  const std::size_t features = raw.front().x.size();
  auto fill = [&](const std::vector<std::size_t>& idx) {
    Batch b;
    b.inputs = linalg::DenseMatrix(idx.size(), features);
    b.labels.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const RawExample& e = raw[idx[r]];
      for (std::size_t c = 0; c < features; ++c) b.inputs(r, c) = e.x[c];
      b.labels[r] = e.label;
    }
    return b;
  };

  Dataset d;
  d.train = fill(train_idx);
  d.valid = fill(valid_idx);
  d.classes = classes;
  return d;
}

inline Dataset gen_blobs(std::size_t n, util::Rng& rng) {
  // Three well-separated Gaussian blobs: centers on a circle of radius 10,
  // unit noise, so the classes are linearly separable by a wide margin.
  constexpr double kPi = 3.14159265358979323846;
  std::vector<RawExample> raw;
  raw.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 3);
    const double ang = kPi / 2.0 + 2.0 * kPi * c / 3.0;
    RawExample e;
    e.x = {10.0 * std::cos(ang) + rng.normal(),
           10.0 * std::sin(ang) + rng.normal()};
    e.label = c;
    raw.push_back(std::move(e));
  }
  Dataset d = assemble(std::move(raw), 3, rng);
  d.channels = 2;
  return d;
}

inline Dataset gen_two_spirals(std::size_t n, util::Rng& rng) {
  // Two interleaved Archimedean spiral arms (~1.25 turns each).  Not linearly
  // separable, but clean enough for a small MLP to fit almost perfectly.
  constexpr double kPi = 3.14159265358979323846;
  const std::size_t m0 = (n + 1) / 2;
  const std::size_t m1 = n / 2;
  std::vector<RawExample> raw;
  raw.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    const std::size_t j = i / 2;
    const std::size_t m = c == 0 ? m0 : m1;
    const double f = (static_cast<double>(j) + 0.5) / static_cast<double>(m);
    const double t = 0.5 * kPi + 2.5 * kPi * f + c * kPi;
    const double r = 0.25 + 1.75 * f;
    RawExample e;
    e.x = {r * std::cos(t) + 0.04 * rng.normal(),
           r * std::sin(t) + 0.04 * rng.normal()};
    e.label = c;
    raw.push_back(std::move(e));
  }
  Dataset d = assemble(std::move(raw), 2, rng);
  d.channels = 2;
  return d;
}

inline Dataset gen_tiny_images(std::size_t n, util::Rng& rng) {
  // 8x8 single-channel images, three shape classes: horizontal bar,
  // vertical bar, main diagonal.  Position jitter + pixel noise.
  constexpr std::size_t kSide = 8;
  std::vector<RawExample> raw;
  raw.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 3);
    RawExample e;
    e.x.assign(kSide * kSide, 0.0);
    const std::size_t pos = 1 + rng.below(kSide - 2);  // bar row/column
    for (std::size_t k = 0; k < kSide; ++k) {
      if (c == 0) {
        e.x[pos * kSide + k] = 1.0;
      } else if (c == 1) {
        e.x[k * kSide + pos] = 1.0;
      } else {
        e.x[k * kSide + k] = 1.0;
      }
    }
    for (double& v : e.x) v += 0.1 * rng.normal();
    e.label = c;
    raw.push_back(std::move(e));
  }
  Dataset d = assemble(std::move(raw), 3, rng);
  d.channels = 1;
  d.height = kSide;
  d.width = kSide;
  return d;
}

}  // namespace detail

// Deterministic synthetic datasets: same (kind, n, seed) always yields the
// same bytes.  Class counts are balanced within +/-1 across the whole set.
inline Dataset gen_dataset(DatasetKind kind, std::size_t n,
                           std::uint64_t seed) {
  if (n < 10) {
    throw ConfigError("dataset.size: need at least 10 examples, got " +
                      std::to_string(n));
  }
  util::Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  switch (kind) {
    case DatasetKind::blobs: return detail::gen_blobs(n, rng);
    case DatasetKind::two_spirals: return detail::gen_two_spirals(n, rng);
    case DatasetKind::tiny_images: return detail::gen_tiny_images(n, rng);
  }
  throw ConfigError("dataset.kind: unknown enumerator");
}

}  // namespace kfacsim::net
