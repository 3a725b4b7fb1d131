// data_ingest: CSV loading, one-hot/standardize encoding, 70/30 splitting,
// group partitioning, and the FMDS binary cache.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fairmap/core.hpp"

namespace fairmap::ingest {

enum class ColumnKind { numeric, categorical, binary };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
};

struct FeatureSchema {
  std::vector<Column> columns;  // feature columns only, in encode order
  std::string sensitive_column;
  std::string label_column;
  // Per categorical/binary column: observed category labels in first-appearance
  // order.  Filled by load_table (raw index coding) and frozen by Encoder::fit.
  std::map<std::string, std::vector<std::string>> categories;
  // Sensitive value -> dense group id (1..|G|), first-appearance order.
  std::vector<std::string> group_values;

  const Column* find(const std::string& name) const {
    for (const auto& c : columns)
      if (c.name == name) return &c;
    return nullptr;
  }
};

struct Dataset {
  Matrix features;                    // N x k
  std::vector<int> labels;            // {0,1}
  std::vector<int> groups;            // 1..|G|
  FeatureSchema schema;
  std::vector<std::size_t> source_rows;  // original row ids (empty = identity)

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }

  void check_consistent() const {
    require(features.rows() == labels.size() && labels.size() == groups.size(),
            errc::dimension_mismatch, "dataset row counts disagree");
    require(features.all_finite(), errc::argument, "non-finite feature entry");
  }

  std::vector<int> group_ids() const {
    std::vector<int> ids;
    for (int g : groups)
      if (std::find(ids.begin(), ids.end(), g) == ids.end()) ids.push_back(g);
    std::sort(ids.begin(), ids.end());
    return ids;
  }
};

struct SplitDataset {
  Dataset train;
  Dataset test;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    std::size_t a = s.find_first_not_of(" \t");
    std::size_t b = s.find_last_not_of(" \t");
    s = (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
  }
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end && *end == '\0' && std::isfinite(out);
}

}  // namespace detail

// Loads a header-ed CSV.  Feature columns listed in the schema are kept (numeric
// parsed, categorical/binary coded as first-appearance indices pending
// encode_features); the sensitive column becomes dense group ids 1..|G|; the
// label column must be "0"/"1".
inline Dataset load_table(const std::string& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  require(in.good(), errc::io, "cannot open " + path);

  std::string header_line;
  if (!std::getline(in, header_line)) fail(errc::empty_input, "empty file: " + path);
  auto header = detail::split_csv_line(header_line);

  auto col_of = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    fail(errc::schema, "missing column '" + name + "' in " + path);
  };

  std::vector<std::size_t> feat_cols;
  for (const auto& c : schema.columns) feat_cols.push_back(col_of(c.name));
  std::size_t sens_col = col_of(schema.sensitive_column);
  std::size_t label_col = col_of(schema.label_column);

  Dataset ds;
  ds.schema = schema;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    require(cells.size() == header.size(), errc::parse,
            "row " + std::to_string(lineno) + ": expected " +
                std::to_string(header.size()) + " cells, got " +
                std::to_string(cells.size()));

    std::vector<double> row(schema.columns.size());
    for (std::size_t j = 0; j < schema.columns.size(); ++j) {
      const auto& col = schema.columns[j];
      const std::string& cell = cells[feat_cols[j]];
      if (col.kind == ColumnKind::numeric) {
        double v;
        require(detail::parse_double(cell, v), errc::parse,
                "row " + std::to_string(lineno) + ": non-numeric value '" + cell +
                    "' in column " + col.name);
        row[j] = v;
      } else {
        auto& cats = ds.schema.categories[col.name];
        auto it = std::find(cats.begin(), cats.end(), cell);
        if (it == cats.end()) {
          cats.push_back(cell);
          row[j] = static_cast<double>(cats.size() - 1);
        } else {
          row[j] = static_cast<double>(it - cats.begin());
        }
      }
    }
    rows.push_back(std::move(row));

    const std::string& sval = cells[sens_col];
    auto& gv = ds.schema.group_values;
    auto git = std::find(gv.begin(), gv.end(), sval);
    if (git == gv.end()) {
      gv.push_back(sval);
      ds.groups.push_back(static_cast<int>(gv.size()));
    } else {
      ds.groups.push_back(static_cast<int>(git - gv.begin()) + 1);
    }

    const std::string& lval = cells[label_col];
    require(lval == "0" || lval == "1", errc::parse,
            "row " + std::to_string(lineno) + ": label must be 0 or 1, got '" +
                lval + "'");
    ds.labels.push_back(lval == "1" ? 1 : 0);
  }
  require(!rows.empty(), errc::empty_input, "no data rows in " + path);

  ds.features = Matrix(rows.size(), schema.columns.size());
  for (std::size_t i = 0; i < rows.size(); ++i) ds.features.set_row(i, rows[i]);
  ds.source_rows.resize(rows.size());
  std::iota(ds.source_rows.begin(), ds.source_rows.end(), std::size_t{0});
  ds.check_consistent();
  return ds;
}

// ---------------------------------------------------------------------------
// Encoding.  Fit on the training split, transform both splits with frozen
// statistics and category sets — test rows never influence the encoding.

class Encoder {
 public:
  static Encoder fit(const Dataset& train) {
    Encoder e;
    e.schema_ = train.schema;
    const auto& X = train.features;
    require(X.rows() > 0, errc::empty_input, "cannot fit encoder on empty data");
    for (std::size_t j = 0; j < e.schema_.columns.size(); ++j) {
      const auto& col = e.schema_.columns[j];
      if (col.kind == ColumnKind::numeric) {
        double mu = 0.0;
        for (std::size_t i = 0; i < X.rows(); ++i) mu += X(i, j);
        mu /= static_cast<double>(X.rows());
        double var = 0.0;
        for (std::size_t i = 0; i < X.rows(); ++i) {
          double d = X(i, j) - mu;
          var += d * d;
        }
        var /= static_cast<double>(X.rows());  // population variance
        e.means_.push_back(mu);
        e.sds_.push_back(std::sqrt(var));
        e.cat_counts_.push_back(0);
      } else {
        // Categories actually observed in the training rows, not whatever the
        // raw load saw across the whole file.
        std::vector<std::string> seen;
        const auto& all = e.schema_.categories.at(col.name);
        for (std::size_t i = 0; i < X.rows(); ++i) {
          const auto& name = all.at(static_cast<std::size_t>(X(i, j)));
          if (std::find(seen.begin(), seen.end(), name) == seen.end())
            seen.push_back(name);
        }
        require(seen.size() >= 2 || col.kind == ColumnKind::binary,
                errc::schema, "categorical column " + col.name +
                                  " has <2 observed categories in training data");
        e.schema_.categories[col.name] = seen;
        e.means_.push_back(0.0);
        e.sds_.push_back(0.0);
        e.cat_counts_.push_back(seen.size());
      }
    }
    return e;
  }

  // raw_schema: the schema whose category index coding `ds` uses (from
  // load_table).  unseen_out counts test-time categories absent from training,
  // encoded as all-zero indicator blocks.
  Dataset transform(const Dataset& ds, std::size_t* unseen_out = nullptr) const {
    std::size_t width = 0;
    for (std::size_t j = 0; j < schema_.columns.size(); ++j)
      width += schema_.columns[j].kind == ColumnKind::numeric ? 1 : cat_counts_[j];

    Dataset out;
    out.labels = ds.labels;
    out.groups = ds.groups;
    out.source_rows = ds.source_rows;
    out.schema = encoded_schema(width);
    out.features = Matrix(ds.size(), width);
    std::size_t unseen = 0;

    for (std::size_t i = 0; i < ds.size(); ++i) {
      std::size_t o = 0;
      for (std::size_t j = 0; j < schema_.columns.size(); ++j) {
        const auto& col = schema_.columns[j];
        if (col.kind == ColumnKind::numeric) {
          double sd = sds_[j];
          double v = ds.features(i, j) - means_[j];
          out.features(i, o++) = sd > 0.0 ? v / sd : 0.0;
        } else {
          const auto& train_cats = schema_.categories.at(col.name);
          const auto& raw_cats = ds.schema.categories.at(col.name);
          const auto& name = raw_cats.at(static_cast<std::size_t>(ds.features(i, j)));
          auto it = std::find(train_cats.begin(), train_cats.end(), name);
          if (it == train_cats.end())
            ++unseen;  // all-zeros block
          for (std::size_t c = 0; c < train_cats.size(); ++c)
            out.features(i, o + c) =
                (it != train_cats.end() &&
                 c == static_cast<std::size_t>(it - train_cats.begin()))
                    ? 1.0
                    : 0.0;
          o += train_cats.size();
        }
      }
    }
    if (unseen_out) *unseen_out = unseen;
    out.check_consistent();
    return out;
  }

  const FeatureSchema& fitted_schema() const { return schema_; }

 private:
  FeatureSchema encoded_schema(std::size_t width) const {
    FeatureSchema s;
    s.sensitive_column = schema_.sensitive_column;
    s.label_column = schema_.label_column;
    s.group_values = schema_.group_values;
    s.columns.reserve(width);
    for (std::size_t j = 0; j < schema_.columns.size(); ++j) {
      const auto& col = schema_.columns[j];
      if (col.kind == ColumnKind::numeric) {
        s.columns.push_back({col.name, ColumnKind::numeric});
      } else {
        for (const auto& cat : schema_.categories.at(col.name))
          s.columns.push_back({col.name + "=" + cat, ColumnKind::numeric});
      }
    }
    return s;
  }

  FeatureSchema schema_;
  std::vector<double> means_, sds_;
  std::vector<std::size_t> cat_counts_;
};

// Spec-surface convenience: self-fit encode.  Pipelines that must not leak fit
// on train and transform both splits via Encoder directly.
inline Dataset encode_features(const Dataset& ds) {
  return Encoder::fit(ds).transform(ds);
}

// ---------------------------------------------------------------------------

inline SplitDataset split_dataset(const Dataset& ds, double train_fraction,
                                  std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, errc::argument,
          "train_fraction must lie in (0,1)");
  require(ds.size() >= 2, errc::argument, "need at least 2 rows to split");
  ds.check_consistent();

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng r(seed);
  r.shuffle(order);

  std::size_t n_train =
      static_cast<std::size_t>(train_fraction * static_cast<double>(ds.size()));
  n_train = std::clamp<std::size_t>(n_train, 1, ds.size() - 1);

  auto take = [&](std::size_t begin, std::size_t end) {
    Dataset part;
    part.schema = ds.schema;
    part.features = Matrix(end - begin, ds.dim());
    for (std::size_t i = begin; i < end; ++i) {
      std::size_t src = order[i];
      part.features.set_row(i - begin, ds.features.row_copy(src));
      part.labels.push_back(ds.labels[src]);
      part.groups.push_back(ds.groups[src]);
      part.source_rows.push_back(ds.source_rows.empty() ? src : ds.source_rows[src]);
    }
    return part;
  };

  SplitDataset out;
  out.train = take(0, n_train);
  out.test = take(n_train, ds.size());
  out.seed = seed;
  return out;
}

inline std::vector<Dataset> partition_groups(const Dataset& ds) {
  ds.check_consistent();
  std::vector<int> ids = ds.group_ids();
  std::vector<Dataset> parts;
  for (int id : ids) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.groups[i] == id) rows.push_back(i);
    Dataset p;
    p.schema = ds.schema;
    p.features = Matrix(rows.size(), ds.dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      p.features.set_row(i, ds.features.row_copy(rows[i]));
      p.labels.push_back(ds.labels[rows[i]]);
      p.groups.push_back(id);
      p.source_rows.push_back(ds.source_rows.empty() ? rows[i]
                                                     : ds.source_rows[rows[i]]);
    }
    parts.push_back(std::move(p));
  }
  return parts;
}

// ---------------------------------------------------------------------------
// FMDS binary cache: magic "FMDS", version byte, u64 N, u64 k, then features
// (row-major), labels, groups — all 64-bit little-endian floats.

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

inline double get_f64(std::istream& is) {
  std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace detail

inline void save_fmds(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), errc::io, "cannot write " + path);
  os.write("FMDS", 4);
  os.put(1);  // version
  detail::put_u64(os, ds.size());
  detail::put_u64(os, ds.dim());
  for (double v : ds.features.data()) detail::put_f64(os, v);
  for (int v : ds.labels) detail::put_f64(os, static_cast<double>(v));
  for (int v : ds.groups) detail::put_f64(os, static_cast<double>(v));
  require(os.good(), errc::io, "write failed: " + path);
}

inline Dataset load_fmds(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), errc::io, "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, "FMDS", 4) == 0, errc::parse,
          path + ": bad FMDS magic");
  int version = is.get();
  require(version == 1, errc::parse, path + ": unsupported FMDS version");
  std::uint64_t n = detail::get_u64(is);
  std::uint64_t k = detail::get_u64(is);
  Dataset ds;
  ds.features = Matrix(n, k);
  for (double& v : ds.features.data()) v = detail::get_f64(is);
  ds.labels.resize(n);
  for (auto& v : ds.labels) v = static_cast<int>(detail::get_f64(is));
  ds.groups.resize(n);
  for (auto& v : ds.groups) v = static_cast<int>(detail::get_f64(is));
  require(is.good(), errc::parse, path + ": truncated FMDS payload");
  ds.source_rows.resize(n);
  std::iota(ds.source_rows.begin(), ds.source_rows.end(), std::size_t{0});
  // FMDS stores no schema; synthesize an all-numeric one so downstream
  // encoding and reporting work unchanged.
  ds.schema.sensitive_column = "group";
  ds.schema.label_column = "label";
  for (std::size_t j = 0; j < k; ++j)
    ds.schema.columns.push_back({"f" + std::to_string(j), ColumnKind::numeric});
  for (int g : ds.group_ids()) ds.schema.group_values.push_back(std::to_string(g));
  return ds;
}

}  // namespace fairmap::ingest
