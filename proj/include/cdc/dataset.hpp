// Copyright 2026 The CDC Authors
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

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cdc/common.hpp"

namespace cdc {

struct FieldSpec {
  enum class Kind { kNumeric, kCategorical };
  Kind kind = Kind::kNumeric;
  // Number of distinct ids for categorical fields; unused for numeric.
  int cardinality = 0;
};

struct FeatureSchema {
  std::vector<FieldSpec> fields;
  std::vector<std::string> names;  // column names, parallel to fields

  int arity() const { return static_cast<int>(fields.size()); }
  int numeric_count() const;
  int categorical_count() const;
};

// One labeled event. `values[i]` is read through the schema: numeric fields
// hold the raw value, categorical fields hold a non-negative integer id.
struct Sample {
  std::vector<double> values;
  DomainId domain = 0;
  int label = 0;
};

enum class Split { kTrain, kProbe, kTest };

// How per-domain rows are carved into train/probe/test. Counts are taken as
// floor(n * fraction) for test and probe, remainder to train. When
// probe_fraction is unset, the probe split instead takes min(probe_size,
// remaining - 1) samples after the test split is removed, so small domains
// keep at least one training row.
struct SplitConfig {
  double test_fraction = 0.2;
  std::optional<double> probe_fraction;
  int probe_size = 512;
  std::uint64_t seed = 0;
};

// Synthetic corpus with planted transfer structure. Domains within a latent
// group share a label-generating weight vector up to noise_scale; groups get
// sign-flipped variants of one master vector so that cross-group joint
// training conflicts. conflict_scale in [0,1] is the per-coordinate flip
// probability toward the group's full flip mask (coordinates are split into
// G round-robin blocks; group g keeps its own block positive and flips the
// rest, which makes distinct groups anti-correlated at full strength).
struct PlantedSpec {
  int groups = 2;
  int domains_per_group = 2;
  int feature_dim = 8;
  double noise_scale = 0.0;
  double conflict_scale = 1.0;
  int samples_per_domain = 1000;
  std::uint64_t seed = 0;
};

struct BatchCursor {
  // Per-domain stream positions. Value type: copy a cursor to replay a batch.
  std::map<DomainId, std::uint64_t> position;
};

class Corpus {
 public:
  // Groups rows by domain and applies the split rule. Domain count and
  // weights (train-sample proportions) are derived from the rows.
  Corpus(FeatureSchema schema, std::vector<Sample> rows,
         const SplitConfig& split);

  int domain_count() const { return static_cast<int>(weights_.size()); }
  const FeatureSchema& schema() const { return schema_; }
  const std::vector<double>& weights() const { return weights_; }
  std::uint64_t seed() const { return seed_; }

  const std::vector<Sample>& split_of(DomainId domain, Split split) const;
  std::vector<DomainId> all_domains() const;

  // Deterministic stratified batch over the union of `domains`: the batch is
  // apportioned to domains by largest-remainder on their renormalized
  // weights (ties to the lower index), and each domain contributes the next
  // samples of its infinite shuffled train stream at cursor.position. The
  // same cursor value always yields the same batch; the cursor advances.
  std::vector<const Sample*> next_batch(const std::vector<DomainId>& domains,
                                        int batch_size,
                                        BatchCursor& cursor) const;

  // Exact per-domain batch composition used by next_batch.
  std::vector<int> batch_allocation(const std::vector<DomainId>& domains,
                                    int batch_size) const;

  // Latent group per domain when the corpus was planted; empty otherwise.
  const std::vector<int>& planted_groups() const { return planted_groups_; }
  const std::vector<double>& planted_weights(DomainId domain) const;

 private:
  FeatureSchema schema_;
  std::vector<std::vector<Sample>> train_, probe_, test_;
  std::vector<double> weights_;
  std::uint64_t seed_ = 0;
  std::vector<int> planted_groups_;
  std::vector<std::vector<double>> planted_weights_;

  friend Corpus generate_synthetic(const PlantedSpec& spec,
                                   const SplitConfig& split);
};

// Pure function of spec.seed (and the split config): same spec, same corpus.
Corpus generate_synthetic(const PlantedSpec& spec);
Corpus generate_synthetic(const PlantedSpec& spec, const SplitConfig& split);

enum class FileFormat { kCsv, kJsonl };

// Column roles for ingestion. Feature columns default to every column that
// is neither the domain nor the label column; categorical_columns marks the
// subset holding integer ids rather than numeric values.
struct IngestSchema {
  std::string domain_column = "domain";
  std::string label_column = "label";
  std::vector<std::string> feature_columns;  // empty = all remaining columns
  std::vector<std::string> categorical_columns;
};

Corpus ingest(const std::string& path, FileFormat format,
              const IngestSchema& schema, const SplitConfig& split);

}  // namespace cdc
