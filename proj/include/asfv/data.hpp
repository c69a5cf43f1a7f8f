#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "asfv/common.hpp"
#include "asfv/nn.hpp"

namespace asfv {

struct Dataset {
  Matrix x;
  std::vector<int> y;
  int classes = 0;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.cols; }

  Dataset subset(const std::vector<std::size_t>& idx) const {
    Dataset d;
    d.classes = classes;
    d.x = Matrix(idx.size(), x.cols);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] >= size()) throw DomainError("subset index out of range");
      std::copy_n(&x.v[idx[r] * x.cols], x.cols, &d.x.v[r * x.cols]);
      d.y.push_back(y[idx[r]]);
    }
    return d;
  }

  /// Rows [begin, end) as a batch.
  Dataset slice(std::size_t begin, std::size_t end) const {
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    return subset(idx);
  }
};

/// Gaussian blobs: class centres drawn from N(0, separation^2 I), samples
/// from N(centre, I). Rows are interleaved by class.
inline Dataset make_gaussian_blobs(std::size_t per_class, std::size_t dim, int classes, double separation, Rng& rng) {
  if (classes < 1 || dim == 0) throw DomainError("blobs need at least one class and one feature");
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> centres(static_cast<std::size_t>(classes), std::vector<double>(dim));
  for (auto& c : centres) {
    for (double& v : c) v = separation * g(rng);
  }
  Dataset d;
  d.classes = classes;
  d.x = Matrix(per_class * static_cast<std::size_t>(classes), dim);
  std::size_t r = 0;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (int c = 0; c < classes; ++c, ++r) {
      for (std::size_t k = 0; k < dim; ++k) d.x(r, k) = centres[static_cast<std::size_t>(c)][k] + g(rng);
      d.y.push_back(c);
    }
  }
  return d;
}

namespace detail {

inline std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError("truncated IDX header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

}  // namespace detail

/// Handwritten-digit archive layout: big-endian IDX3 images (magic 2051) and
/// IDX1 labels (magic 2049). Pixels are scaled to [0, 1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path, int classes = 10) {
  std::ifstream im(images_path, std::ios::binary), lb(labels_path, std::ios::binary);
  if (!im) throw ParseError("cannot open '" + images_path + "'");
  if (!lb) throw ParseError("cannot open '" + labels_path + "'");
  if (detail::read_be32(im) != 2051) throw ParseError("'" + images_path + "' is not an IDX3 image file");
  const std::uint32_t n = detail::read_be32(im), rows = detail::read_be32(im), cols = detail::read_be32(im);
  if (detail::read_be32(lb) != 2049) throw ParseError("'" + labels_path + "' is not an IDX1 label file");
  if (detail::read_be32(lb) != n) throw ParseError("image and label counts differ");
  Dataset d;
  d.classes = classes;
  d.x = Matrix(n, std::size_t{rows} * cols);
  std::vector<unsigned char> buf(d.x.cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!im.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
      throw ParseError("truncated image data");
    }
    for (std::size_t k = 0; k < buf.size(); ++k) d.x(i, k) = buf[k] / 255.0;
    char c;
    if (!lb.get(c)) throw ParseError("truncated label data");
    const int label = static_cast<unsigned char>(c);
    if (label >= classes) throw ParseError("label " + std::to_string(label) + " out of range");
    d.y.push_back(label);
  }
  return d;
}

/// Delimited text: one sample per line, "label,f1,...,fd". Lines starting
/// with '#' are skipped.
inline Dataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  Dataset d;
  std::vector<double> flat;
  std::string line;
  std::size_t dim = 0, lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (row.size() < 2) throw ParseError(path + ":" + std::to_string(lineno) + ": need a label and a feature");
    if (dim == 0) dim = row.size() - 1;
    if (row.size() - 1 != dim) throw ParseError(path + ":" + std::to_string(lineno) + ": ragged row");
    const int label = static_cast<int>(row[0]);
    if (label < 0 || row[0] != label) throw ParseError(path + ":" + std::to_string(lineno) + ": bad label");
    d.y.push_back(label);
    d.classes = std::max(d.classes, label + 1);
    flat.insert(flat.end(), row.begin() + 1, row.end());
  }
  if (d.y.empty()) throw ParseError("'" + path + "' holds no samples");
  d.x.rows = d.y.size();
  d.x.cols = dim;
  d.x.v = std::move(flat);
  return d;
}

struct PartitionConfig {
  int labels_per_vehicle = 3;
  double power_law_shape = 1.5;     // Pareto tail index of the size weights
  std::size_t mean_samples = 100;   // target mean samples per vehicle
};

/// Non-IID split: every vehicle gets `labels_per_vehicle` distinct labels and
/// a Pareto-distributed sample count; pools are drawn without replacement,
/// and each vehicle's index list is shuffled once.
inline std::vector<std::vector<std::size_t>> partition_noniid(const Dataset& data, std::size_t vehicles,
                                                              const PartitionConfig& cfg, Rng& rng) {
  const int L = cfg.labels_per_vehicle;
  if (vehicles == 0) throw DomainError("partition needs at least one vehicle");
  if (L < 1 || L > data.classes) throw DomainError("labels per vehicle must lie in [1, classes]");
  if (!(cfg.power_law_shape > 0.0)) throw DomainError("power-law shape must be > 0");

  std::vector<std::vector<std::size_t>> pools(static_cast<std::size_t>(data.classes));
  for (std::size_t i = 0; i < data.size(); ++i) pools[static_cast<std::size_t>(data.y[i])].push_back(i);
  for (auto& p : pools) std::shuffle(p.begin(), p.end(), rng);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> w(vehicles);
  for (double& x : w) x = std::pow(1.0 - unit(rng), -1.0 / cfg.power_law_shape);
  const double wmean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(vehicles);

  std::vector<std::vector<std::size_t>> out(vehicles);
  std::vector<std::size_t> taken(pools.size(), 0);
  for (std::size_t n = 0; n < vehicles; ++n) {
    std::vector<int> open;
    for (int c = 0; c < data.classes; ++c) {
      if (taken[static_cast<std::size_t>(c)] < pools[static_cast<std::size_t>(c)].size()) open.push_back(c);
    }
    if (static_cast<int>(open.size()) < L) {
      throw DomainError("dataset too small: vehicle " + std::to_string(n) + " cannot get " + std::to_string(L) +
                        " labels");
    }
    std::shuffle(open.begin(), open.end(), rng);
    const auto want = std::max<std::size_t>(
        static_cast<std::size_t>(L),
        static_cast<std::size_t>(std::llround(static_cast<double>(cfg.mean_samples) * w[n] / wmean)));
    for (int j = 0; j < L; ++j) {
      const auto c = static_cast<std::size_t>(open[static_cast<std::size_t>(j)]);
      std::size_t quota = want / static_cast<std::size_t>(L) + (static_cast<std::size_t>(j) < want % static_cast<std::size_t>(L) ? 1 : 0);
      quota = std::clamp<std::size_t>(quota, 1, pools[c].size() - taken[c]);
      for (std::size_t k = 0; k < quota; ++k) out[n].push_back(pools[c][taken[c]++]);
    }
    std::shuffle(out[n].begin(), out[n].end(), rng);
  }
  return out;
}

/// Seeded train/test split: rows are permuted once, every `test_every`-th
/// row of the permutation goes to test.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& d, std::size_t test_every, Rng& rng) {
  if (test_every < 2) throw DomainError("test_every must be >= 2");
  std::vector<std::size_t> perm(d.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> tr, te;
  for (std::size_t i = 0; i < perm.size(); ++i) (i % test_every == 0 ? te : tr).push_back(perm[i]);
  std::sort(tr.begin(), tr.end());
  std::sort(te.begin(), te.end());
  return {d.subset(tr), d.subset(te)};
}

}  // namespace asfv
