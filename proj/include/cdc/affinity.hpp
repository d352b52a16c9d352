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
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cdc/common.hpp"
#include "cdc/dataset.hpp"
#include "cdc/model.hpp"

namespace cdc {

// Lookahead probing: fork the model from its current state, apply
// lookahead_batches probe updates on a domain subset, compare per-domain
// probe-split losses against the pre-probe state, discard the fork. The
// live model is never touched, so probe results are independent of probe
// order and scheduling.
struct AffinityConfig {
  double alpha = 0.3;            // smoothing toward the previous matrices
  int lookahead_batches = 1;     // updates per probe
  int batch_size = 256;
  int treatment_count = 20;      // R
  double inclusion_prob = 0.5;   // per-domain treatment inclusion
  double loss_epsilon = 1e-12;   // denominator guard
  std::uint64_t seed = 0;
};

struct AffinityState {
  Eigen::MatrixXd isolated;  // directional gain of u alone on v
  Eigen::MatrixXd hybrid;    // gain on v of keeping u in its mixed set
  // Mixed training set per domain, sorted; always contains the domain
  // itself. All domains at round 0, then the domain's cluster's source set.
  std::vector<std::vector<DomainId>> mixed_sets;
  int round = 0;

  static AffinityState initial(int n_domains);
};

struct TreatmentRecord {
  Eigen::MatrixXd effects;                  // R x D loss-ratio gains
  std::vector<std::vector<DomainId>> subsets;  // sorted, nonempty
};

// Deterministic probe batch: stratified over `domains` exactly like
// Corpus::next_batch, but indices are drawn (with replacement) from a
// substream of `seed` so the batch is a pure function of its arguments.
std::vector<const Sample*> probe_batch(const Corpus& corpus,
                                       const std::vector<DomainId>& domains,
                                       int batch_size, std::uint64_t seed);

// Substream for the probe update `step` on a domain set identified by
// `set_key` (hash_domain_set for subset probes, the treatment index for
// treatments). Keyed by the set, not the probing domain, so shared states
// can be reused and recomputation is bit-identical.
std::uint64_t probe_batch_seed(std::uint64_t root, int round,
                               std::string_view kind, std::uint64_t set_key,
                               int step);

// Fork the model and train lookahead_batches probe batches on `domains`.
Predictor probe_fork(const Predictor& model, const Corpus& corpus,
                     const std::vector<DomainId>& domains,
                     const AffinityConfig& config, int round,
                     std::string_view kind, std::uint64_t set_key);

// Summed probe-split loss per domain (index = domain id).
std::vector<double> probe_losses(const Predictor& model, const Corpus& corpus);

// One isolated-affinity round: for each u, probe on u alone and fold
// 1 - loss(v | after) / loss(v | before) into state.isolated with smoothing
// alpha. Entries whose baseline loss is below loss_epsilon decay by alpha
// instead (guard). The model is left untouched.
void probe_isolated(const Predictor& model, const Corpus& corpus,
                    AffinityState& state, const AffinityConfig& config);

// One hybrid-affinity round over state.mixed_sets: compares probe states
// trained on M_u and on M_u - {u}. Domains sharing a mixed set reuse one
// trained state. Singleton mixed sets fall back to the isolated
// instantaneous contribution for that row.
void probe_hybrid(const Predictor& model, const Corpus& corpus,
                  AffinityState& state, const AffinityConfig& config);

// R random-subset treatments (each domain included with inclusion_prob,
// empty draws rejected): effects[r, v] = 1 - loss(v | after r) /
// loss(v | before), unsmoothed. Pure function of (model, corpus, config,
// round).
TreatmentRecord probe_treatments(const Predictor& model, const Corpus& corpus,
                                 const AffinityConfig& config, int round);

// Sets mixed_sets from a clustering outcome: domain u in target cluster k
// trains with sources[k] plus u itself.
void update_mixed_sets(AffinityState& state,
                       const std::vector<std::vector<DomainId>>& targets,
                       const std::vector<std::vector<DomainId>>& sources);

}  // namespace cdc
