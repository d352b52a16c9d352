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
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cdc/common.hpp"
#include "cdc/dataset.hpp"

namespace cdc {

// Shared-parameter multi-domain predictor: per-field embeddings, a shared
// ReLU trunk, and one linear head per slot. A slot is a head index; the
// domain -> slot map routes each sample to its cluster's head (or to a
// per-domain head when slot_count == D and the map is the identity).
struct PredictorConfig {
  FeatureSchema schema;
  int embedding_dim = 4;
  std::vector<int> hidden = {32, 16};
  int slot_count = 1;
  double learning_rate = 1e-2;
  enum class Optimizer { kSgd, kAdam };
  Optimizer optimizer = Optimizer::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  std::uint64_t shape_hash() const;
};

// Full trainable state: parameters plus optimizer accumulators. restore()
// of a snapshot is bitwise exact, which is what makes lookahead probes
// order-independent. Byte layout is versioned and stable within a version.
struct ParamState {
  std::uint64_t shape_hash = 0;
  std::uint64_t step = 0;
  std::vector<double> params;
  std::vector<double> adam_m;
  std::vector<double> adam_v;

  bool operator==(const ParamState& other) const;
  std::vector<std::uint8_t> to_bytes() const;
  static ParamState from_bytes(std::span<const std::uint8_t> bytes);
};

// Column-dense view of a set of samples, assembled once and reused across
// forward passes.
struct DenseBatch {
  Eigen::MatrixXd numeric;                          // B x n_numeric
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> categorical;
  Eigen::VectorXd labels;                           // B
  std::vector<DomainId> domains;                    // B

  int size() const { return static_cast<int>(domains.size()); }
};

DenseBatch assemble_batch(const FeatureSchema& schema,
                          std::span<const Sample* const> samples);
DenseBatch assemble_split(const Corpus& corpus, DomainId domain, Split split);

class Predictor {
 public:
  explicit Predictor(PredictorConfig config);

  const PredictorConfig& config() const { return config_; }

  // Routes domain u to head slot map[u]. An empty map routes everything to
  // slot 0. Not part of the trainable state.
  void set_slot_map(std::vector<int> domain_to_slot);
  const std::vector<int>& slot_map() const { return slot_map_; }
  int slot_of(DomainId domain) const;

  double forward(const Sample& sample) const;
  Eigen::VectorXd scores(const DenseBatch& batch) const;

  // Summed binary cross-entropy per requested domain on the given split.
  std::map<DomainId, double> loss(const Corpus& corpus,
                                  const std::vector<DomainId>& domains,
                                  Split split) const;
  double loss_sum(const DenseBatch& batch) const;
  double loss_mean(const DenseBatch& batch) const;

  // Gradient of the mean batch loss w.r.t. the flat parameter vector.
  std::vector<double> gradient(const DenseBatch& batch) const;

  // One optimizer step on the batch; returns the pre-update mean loss.
  double train_step(const DenseBatch& batch);
  double train_step(std::span<const Sample* const> samples);

  ParamState snapshot() const;
  void restore(const ParamState& state);

  // Copies head parameters and their optimizer accumulators between slots.
  void copy_slot(int from, int to);

  // Mutable flat parameter vector (embeddings, trunk, heads). Exposed for
  // serialization and tests; optimizer accumulators are not included.
  std::span<double> raw_parameters() { return params_; }
  std::span<const double> raw_parameters() const { return params_; }

 private:
  struct Layout;

  int trunk_input_dim() const;
  int trunk_output_dim() const;
  Eigen::MatrixXd trunk_input(const DenseBatch& batch) const;
  Eigen::VectorXd logits(const DenseBatch& batch,
                         std::vector<Eigen::MatrixXd>* activations) const;
  void apply_gradient(const std::vector<double>& grad);

  PredictorConfig config_;
  std::vector<int> slot_map_;
  std::vector<double> params_;
  std::vector<double> adam_m_;
  std::vector<double> adam_v_;
  std::uint64_t step_ = 0;

  // Offsets into params_: per categorical field embedding table, then per
  // trunk layer (weights, bias), then heads (weights, biases).
  std::vector<std::size_t> embedding_offsets_;
  std::vector<std::size_t> layer_weight_offsets_;
  std::vector<std::size_t> layer_bias_offsets_;
  std::size_t head_weight_offset_ = 0;
  std::size_t head_bias_offset_ = 0;
};

}  // namespace cdc
