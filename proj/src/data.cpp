#include "fedq/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace fedq {

using nlohmann::json;

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileUnreadable: return "FileUnreadable";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroTotalWeight: return "ZeroTotalWeight";
    case ErrorCode::AllZeroRow: return "AllZeroRow";
    case ErrorCode::EmptyPosteriors: return "EmptyPosteriors";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyBuffer: return "EmptyBuffer";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

void PartitionConfig::validate() const {
  if (num_environments < 1) throw Error(ErrorCode::ConfigInvalid, "num_environments must be >= 1");
  if (num_clusters < 1) throw Error(ErrorCode::ConfigInvalid, "num_clusters must be >= 1");
  if (!(dirichlet_alpha > 0.0)) throw Error(ErrorCode::ConfigInvalid, "dirichlet_alpha must be > 0");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorCode::ConfigInvalid, "train_fraction must lie in (0, 1)");
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
      cur.push_back(c);
    } else if (c == delim && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

Schema schema_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("schema is not valid JSON: ") + e.what());
  }
  static const std::set<std::string> known{"delimiter", "label", "label_map", "label_default",
                                           "numeric", "categorical"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw Error(ErrorCode::SchemaMismatch, "unknown schema key '" + key + "'");
  Schema s;
  if (!j.contains("label") || !j.contains("label_map"))
    throw Error(ErrorCode::SchemaMismatch, "schema needs 'label' and 'label_map'");
  s.label_column = j.at("label").get<std::string>();
  for (const auto& [k, v] : j.at("label_map").items()) {
    int lab = v.get<int>();
    if (lab != 0 && lab != 1) throw Error(ErrorCode::SchemaMismatch, "label_map values must be 0 or 1");
    s.label_map[k] = lab;
  }
  if (j.contains("label_default")) {
    int lab = j.at("label_default").get<int>();
    if (lab != 0 && lab != 1) throw Error(ErrorCode::SchemaMismatch, "label_default must be 0 or 1");
    s.label_default = lab;
  }
  if (j.contains("delimiter")) {
    auto d = j.at("delimiter").get<std::string>();
    if (d.size() != 1) throw Error(ErrorCode::SchemaMismatch, "delimiter must be one character");
    s.delimiter = d[0];
  }
  if (j.contains("numeric")) s.numeric = j.at("numeric").get<std::vector<std::string>>();
  if (j.contains("categorical")) s.categorical = j.at("categorical").get<std::vector<std::string>>();
  return s;
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileUnreadable, "cannot open schema " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return schema_from_json_text(ss.str());
}

Dataset standardize(std::vector<std::vector<double>> rows, std::vector<int> labels,
                    std::vector<std::string> names) {
  if (rows.empty()) throw Error(ErrorCode::EmptyDataset, "no rows to standardize");
  const std::size_t d = names.size();
  const double n = static_cast<double>(rows.size());
  std::vector<FeatureScale> scale(d);
  for (std::size_t c = 0; c < d; ++c) {
    double sum = 0.0;
    for (const auto& r : rows) sum += r[c];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : rows) ss += (r[c] - mean) * (r[c] - mean);
    scale[c] = {mean, std::sqrt(ss / n)};
  }
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < d; ++c)
    if (scale[c].stddev > 1e-12) keep.push_back(c);

  Dataset ds;
  for (auto c : keep) {
    ds.feature_names.push_back(names[c]);
    ds.standardization.push_back(scale[c]);
  }
  ds.samples.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    SampleRecord rec;
    rec.features.reserve(keep.size());
    for (auto c : keep) rec.features.push_back((rows[i][c] - scale[c].mean) / scale[c].stddev);
    rec.label = labels[i];
    rec.row_id = i;
    ds.samples.push_back(std::move(rec));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema,
                     const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileUnreadable, "cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyDataset, "missing header row");
  const auto header = split_line(line, schema.delimiter);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  auto column = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw Error(ErrorCode::SchemaMismatch, "missing column '" + name + "'");
    return it->second;
  };
  const std::size_t label_col = column(schema.label_column);
  std::vector<std::size_t> num_cols, cat_cols;
  for (const auto& n : schema.numeric) num_cols.push_back(column(n));
  for (const auto& n : schema.categorical) cat_cols.push_back(column(n));

  struct RawRow {
    std::size_t order;
    std::vector<double> numeric;
    std::vector<std::string> categorical;
    int label;
  };
  std::vector<RawRow> kept;
  std::size_t rejected = 0, accepted = 0;
  Rng rng(derive_seed(options.seed, 0x5253));

  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line, schema.delimiter);
    if (fields.size() != header.size()) { ++rejected; continue; }
    RawRow row{accepted, {}, {}, 0};
    const auto& lv = fields[label_col];
    if (auto it = schema.label_map.find(lv); it != schema.label_map.end()) {
      row.label = it->second;
    } else if (schema.label_default) {
      row.label = *schema.label_default;
    } else {
      ++rejected;
      continue;
    }
    bool ok = true;
    for (auto c : num_cols) {
      auto v = parse_double(fields[c]);
      if (!v) { ok = false; break; }
      row.numeric.push_back(*v);
    }
    if (!ok) { ++rejected; continue; }
    for (auto c : cat_cols) row.categorical.push_back(fields[c]);

    // Reservoir sampling (algorithm R) keyed on accepted-row order.
    if (!options.max_rows || kept.size() < *options.max_rows) {
      kept.push_back(std::move(row));
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, accepted);
      auto slot = pick(rng);
      if (slot < *options.max_rows) kept[slot] = std::move(row);
    }
    ++accepted;
  }
  if (kept.empty()) throw Error(ErrorCode::EmptyDataset, "no usable rows in " + path.string());
  std::sort(kept.begin(), kept.end(), [](const RawRow& a, const RawRow& b) { return a.order < b.order; });

  std::vector<std::string> names = schema.numeric;
  std::vector<std::vector<std::string>> levels(cat_cols.size());
  for (std::size_t k = 0; k < cat_cols.size(); ++k) {
    std::set<std::string> seen;
    for (const auto& r : kept) seen.insert(r.categorical[k]);
    levels[k].assign(seen.begin(), seen.end());
    for (const auto& v : levels[k]) names.push_back(schema.categorical[k] + "=" + v);
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  rows.reserve(kept.size());
  for (const auto& r : kept) {
    std::vector<double> x = r.numeric;
    for (std::size_t k = 0; k < cat_cols.size(); ++k) {
      auto pos = std::lower_bound(levels[k].begin(), levels[k].end(), r.categorical[k]) - levels[k].begin();
      for (std::size_t l = 0; l < levels[k].size(); ++l) x.push_back(l == static_cast<std::size_t>(pos) ? 1.0 : 0.0);
    }
    rows.push_back(std::move(x));
    labels.push_back(r.label);
  }
  Dataset ds = standardize(std::move(rows), std::move(labels), std::move(names));
  ds.rejected_rows = rejected;
  if (ds.dim() == 0) throw Error(ErrorCode::EmptyDataset, "every feature column is constant");
  return ds;
}

AuditReport audit_shards(const std::vector<EnvironmentShard>& shards) {
  AuditReport rep;
  if (shards.empty()) return rep;
  rep.min_train = shards.front().train.size();
  for (const auto& s : shards) {
    ShardAudit a{s.env_id, s.train.size(), s.test.size(), 0, 0};
    for (const auto& r : s.train) (r.label == 1 ? a.positives : a.negatives)++;
    if (a.positives == 0) rep.zero_positive.push_back(s.env_id);
    if (a.negatives == 0) rep.zero_negative.push_back(s.env_id);
    rep.min_train = std::min(rep.min_train, a.train_size);
    rep.max_train = std::max(rep.max_train, a.train_size);
    rep.environments.push_back(a);
  }
  return rep;
}

ShardManifest make_manifest(const std::vector<EnvironmentShard>& shards) {
  ShardManifest m;
  for (const auto& s : shards) {
    ManifestEntry e{s.env_id, {}, {}};
    for (const auto& r : s.train) e.train_rows.push_back(r.row_id);
    for (const auto& r : s.test) e.test_rows.push_back(r.row_id);
    m.num_rows += e.train_rows.size() + e.test_rows.size();
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const ShardManifest& m) {
  json j;
  j["dataset"] = m.dataset_path;
  j["schema"] = m.schema_path;
  j["subsample_rows"] = m.subsample_rows ? json(*m.subsample_rows) : json(nullptr);
  j["load_seed"] = m.load_seed;
  j["num_rows"] = m.num_rows;
  j["partition"] = {{"num_environments", m.partition.num_environments},
                    {"num_clusters", m.partition.num_clusters},
                    {"dirichlet_alpha", m.partition.dirichlet_alpha},
                    {"train_fraction", m.partition.train_fraction},
                    {"seed", m.partition.seed}};
  json envs = json::array();
  for (const auto& e : m.entries)
    envs.push_back({{"env_id", e.env_id}, {"train", e.train_rows}, {"test", e.test_rows}});
  j["environments"] = std::move(envs);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << j.dump() << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ShardManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileUnreadable, "cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
    ShardManifest m;
    m.dataset_path = j.at("dataset").get<std::string>();
    m.schema_path = j.at("schema").get<std::string>();
    if (!j.at("subsample_rows").is_null()) m.subsample_rows = j.at("subsample_rows").get<std::size_t>();
    m.load_seed = j.at("load_seed").get<std::uint64_t>();
    m.num_rows = j.at("num_rows").get<std::size_t>();
    const auto& p = j.at("partition");
    m.partition.num_environments = p.at("num_environments").get<std::size_t>();
    m.partition.num_clusters = p.at("num_clusters").get<std::size_t>();
    m.partition.dirichlet_alpha = p.at("dirichlet_alpha").get<double>();
    m.partition.train_fraction = p.at("train_fraction").get<double>();
    m.partition.seed = p.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("environments"))
      m.entries.push_back({e.at("env_id").get<std::size_t>(), e.at("train").get<std::vector<std::size_t>>(),
                           e.at("test").get<std::vector<std::size_t>>()});
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("malformed manifest: ") + e.what());
  }
}

std::vector<EnvironmentShard> apply_manifest(const Dataset& ds, const ShardManifest& m) {
  std::vector<EnvironmentShard> shards;
  auto fetch = [&](std::size_t id) {
    if (id >= ds.size()) throw Error(ErrorCode::SchemaMismatch, "manifest row id out of range");
    return ds.samples[id];
  };
  for (const auto& e : m.entries) {
    EnvironmentShard s;
    s.env_id = e.env_id;
    for (auto id : e.train_rows) s.train.push_back(fetch(id));
    for (auto id : e.test_rows) s.test.push_back(fetch(id));
    shards.push_back(std::move(s));
  }
  return shards;
}

}  // namespace fedq
