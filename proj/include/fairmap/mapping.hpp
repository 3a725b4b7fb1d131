// manifold_mapping (part 2): T^(i) — inverse-distance-weighted mapping of a
// group feature vector onto the corresponded population training vectors of
// its k nearest group training neighbors.
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "fairmap/core.hpp"
#include "fairmap/correspondence.hpp"
#include "fairmap/dataset.hpp"
#include "fairmap/kdtree.hpp"

namespace fairmap::manifold {

struct CanonicalMapping {
  int group_id = 0;
  KdTree tree;  // over the group's training features X_tr^(i)
  correspondence::CorrespondenceTable correspondences;
  Matrix population_features;  // full population training features
  std::size_t neighbor_count = 10;
};

inline CanonicalMapping build_mapping(
    const Matrix& group_train_features,
    correspondence::CorrespondenceTable table, Matrix population_features,
    std::size_t neighbor_count, int group_id = 0) {
  require(group_train_features.rows() == table.pairs.size(),
          errc::dimension_mismatch,
          "tree point count must equal correspondence pair count");
  require(neighbor_count >= 1 && neighbor_count <= group_train_features.rows(),
          errc::argument, "neighbor_count must lie in [1, N_g]");
  require(group_train_features.cols() == population_features.cols(),
          errc::dimension_mismatch, "group/population feature width mismatch");
  CanonicalMapping m;
  m.group_id = group_id;
  m.tree = KdTree(group_train_features);
  m.correspondences = std::move(table);
  m.population_features = std::move(population_features);
  m.neighbor_count = neighbor_count;
  return m;
}

inline std::vector<double> map_to_canonical(const CanonicalMapping& mapping,
                                            const std::vector<double>& f_new) {
  auto [idx, dist] = mapping.tree.knn_query(f_new, mapping.neighbor_count);
  const std::size_t k = mapping.population_features.cols();
  std::vector<double> out(k, 0.0);

  // Results are sorted by (distance, index), so on an exact hit the first
  // entry is already the lowest-index zero-distance neighbor: it takes all
  // the weight and the training point maps to its corresponded population
  // vector exactly.
  if (dist[0] == 0.0) {
    std::size_t pop = mapping.correspondences.pairs[idx[0]].second;
    const double* p = mapping.population_features.row(pop);
    out.assign(p, p + k);
    return out;
  }
  double inv_sum = 0.0;
  for (double d : dist) inv_sum += 1.0 / d;
  for (std::size_t n = 0; n < idx.size(); ++n) {
    double w = (1.0 / dist[n]) / inv_sum;
    std::size_t pop = mapping.correspondences.pairs[idx[n]].second;
    const double* p = mapping.population_features.row(pop);
    for (std::size_t j = 0; j < k; ++j) out[j] += w * p[j];
  }
  return out;
}

inline ingest::Dataset map_dataset(const CanonicalMapping& mapping,
                                   const ingest::Dataset& group_test) {
  group_test.check_consistent();
  for (int g : group_test.groups)
    require(g == mapping.group_id, errc::group_mismatch,
            "row belongs to group " + std::to_string(g) + ", mapping is for " +
                std::to_string(mapping.group_id));
  ingest::Dataset out;
  out.schema = group_test.schema;
  out.labels = group_test.labels;
  out.groups = group_test.groups;
  out.source_rows = group_test.source_rows;
  out.features = Matrix(group_test.size(), mapping.population_features.cols());
  for (std::size_t i = 0; i < group_test.size(); ++i)
    out.features.set_row(i, map_to_canonical(mapping, group_test.features.row_copy(i)));
  return out;
}

// ---------------------------------------------------------------------------
// FMKD persistence.  The tree is not serialized: construction is
// deterministic in the point order, so storing the points is enough.

inline void save_fmkd(const CanonicalMapping& m, const std::string& path) {
  namespace d = ingest::detail;
  std::ofstream os(path, std::ios::binary);
  require(os.good(), errc::io, "cannot write " + path);
  os.write("FMKD", 4);
  os.put(1);
  d::put_u64(os, static_cast<std::uint64_t>(m.group_id));
  d::put_u64(os, m.neighbor_count);
  d::put_u64(os, m.tree.size());
  d::put_u64(os, m.tree.dim());
  for (double v : m.tree.points().data()) d::put_f64(os, v);
  for (const auto& [g, p] : m.correspondences.pairs) {
    d::put_u64(os, g);
    d::put_u64(os, p);
  }
  for (double v : m.correspondences.matched_scores) d::put_f64(os, v);
  d::put_u64(os, m.population_features.rows());
  d::put_u64(os, m.population_features.cols());
  for (double v : m.population_features.data()) d::put_f64(os, v);
  require(os.good(), errc::io, "write failed: " + path);
}

inline CanonicalMapping load_fmkd(const std::string& path) {
  namespace d = ingest::detail;
  std::ifstream is(path, std::ios::binary);
  require(is.good(), errc::io, "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, "FMKD", 4) == 0, errc::parse,
          path + ": bad FMKD magic");
  require(is.get() == 1, errc::parse, path + ": unsupported FMKD version");
  CanonicalMapping m;
  m.group_id = static_cast<int>(d::get_u64(is));
  m.neighbor_count = d::get_u64(is);
  std::uint64_t n = d::get_u64(is);
  std::uint64_t k = d::get_u64(is);
  Matrix pts(n, k);
  for (double& v : pts.data()) v = d::get_f64(is);
  m.correspondences.group_id = m.group_id;
  m.correspondences.pairs.resize(n);
  for (auto& [g, p] : m.correspondences.pairs) {
    g = d::get_u64(is);
    p = d::get_u64(is);
  }
  m.correspondences.matched_scores.resize(n);
  for (double& v : m.correspondences.matched_scores) v = d::get_f64(is);
  std::uint64_t pn = d::get_u64(is);
  std::uint64_t pk = d::get_u64(is);
  m.population_features = Matrix(pn, pk);
  for (double& v : m.population_features.data()) v = d::get_f64(is);
  require(is.good(), errc::parse, path + ": truncated FMKD payload");
  m.tree = KdTree(pts);
  return m;
}

}  // namespace fairmap::manifold
