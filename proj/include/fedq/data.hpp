#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedq/common.hpp"

namespace fedq {

// One standardized row. row_id is the index into the owning Dataset and is
// the identity used for train/test disjointness and manifests.
struct SampleRecord {
  std::vector<double> features;
  int label = 0;  // 0 = benign, 1 = malicious
  std::size_t row_id = 0;
};

struct FeatureScale {
  double mean = 0.0;
  double stddev = 1.0;
};

struct Dataset {
  std::vector<SampleRecord> samples;
  std::vector<std::string> feature_names;
  std::vector<FeatureScale> standardization;
  std::size_t rejected_rows = 0;

  std::size_t dim() const { return feature_names.size(); }
  std::size_t size() const { return samples.size(); }
};

struct EnvironmentShard {
  std::size_t env_id = 0;
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> test;

  std::size_t n_train() const { return train.size(); }
};

struct PartitionConfig {
  std::size_t num_environments = 100;
  std::size_t num_clusters = 2;
  double dirichlet_alpha = 0.4;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

// Column roles for delimited input. Columns not mentioned are ignored.
struct Schema {
  char delimiter = ',';
  std::string label_column;
  std::map<std::string, int> label_map;
  std::optional<int> label_default;  // applied to label values not in label_map
  std::vector<std::string> numeric;
  std::vector<std::string> categorical;
};

Schema load_schema(const std::filesystem::path& path);
Schema schema_from_json_text(const std::string& text);

struct LoadOptions {
  std::optional<std::size_t> max_rows;  // reservoir-sampled row cap
  std::uint64_t seed = 0;
};

/// Reads a delimited file with a header row, one-hot encodes categorical
/// columns, drops constant features and z-scores the rest over all kept rows
/// (population standard deviation). Rows with unparseable values or unmapped
/// labels are skipped and counted in Dataset::rejected_rows.
Dataset load_dataset(const std::filesystem::path& path, const Schema& schema,
                     const LoadOptions& options = {});

// Standardizes raw rows in place; drops zero-variance columns.
Dataset standardize(std::vector<std::vector<double>> rows, std::vector<int> labels,
                    std::vector<std::string> names);

/// k-means++ seeded Lloyd iterations, best of `restarts` by inertia.
std::vector<int> cluster_dataset(const Dataset& ds, std::size_t k, std::uint64_t seed,
                                 int restarts = 10, int max_iterations = 100);

/// Per-cluster sequential Polya urn: a cluster-c sample goes to environment j
/// with probability proportional to alpha + (cluster-c samples already in j).
/// Each environment's pool is then split uniformly at random into train/test.
std::vector<EnvironmentShard> partition_mixture(const Dataset& ds,
                                                const std::vector<int>& clusters,
                                                const PartitionConfig& cfg);

// Synthetic Gaussian mixtures with per-component linear labelling rules.
struct LabelRule {
  std::vector<double> normal;  // y = [normal . x + offset > 0], xor flip
  double offset = 0.0;
  bool flip = false;
  double margin = 0.0;  // samples closer than this to the boundary are redrawn
};

struct SynthComponent {
  std::size_t samples = 0;
  std::vector<double> mean;
  std::vector<double> covariance;  // dim x dim, row-major; empty means identity
  LabelRule rule;
};

struct SynthConfig {
  std::size_t dim = 2;
  std::vector<SynthComponent> components;
  std::uint64_t seed = 0;
};

struct SynthResult {
  Dataset dataset;
  std::vector<int> clusters;  // generating component per sample
};

SynthResult synth_mixture(const SynthConfig& spec);

// Two components over the same N(0, I) feature law; component 1 negates the
// labels of component 0.
SynthConfig flipped_label_config(std::size_t dim, std::size_t samples_per_component,
                                 std::uint64_t seed);

// Two components over the same N(0, I) feature law whose boundaries differ by
// `angle_radians` in the (x0, x1) plane.
SynthConfig rotated_boundary_config(std::size_t dim, std::size_t samples_per_component,
                                    double angle_radians, std::uint64_t seed);

struct ShardAudit {
  std::size_t env_id = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t positives = 0;  // training positives
  std::size_t negatives = 0;
};

struct AuditReport {
  std::vector<ShardAudit> environments;
  std::vector<std::size_t> zero_positive;
  std::vector<std::size_t> zero_negative;
  std::size_t min_train = 0;
  std::size_t max_train = 0;
};

AuditReport audit_shards(const std::vector<EnvironmentShard>& shards);

// Replayable record of a partition.
struct ManifestEntry {
  std::size_t env_id = 0;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

struct ShardManifest {
  std::string dataset_path;
  std::string schema_path;
  std::optional<std::size_t> subsample_rows;
  std::uint64_t load_seed = 0;
  std::size_t num_rows = 0;
  PartitionConfig partition;
  std::vector<ManifestEntry> entries;
};

ShardManifest make_manifest(const std::vector<EnvironmentShard>& shards);
void write_manifest(const std::filesystem::path& path, const ShardManifest& manifest);
ShardManifest read_manifest(const std::filesystem::path& path);
std::vector<EnvironmentShard> apply_manifest(const Dataset& ds, const ShardManifest& manifest);

}  // namespace fedq
