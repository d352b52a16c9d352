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

#include "cdc/affinity.hpp"

#include <algorithm>
#include <map>

#include "cdc/rng.hpp"

namespace cdc {

AffinityState AffinityState::initial(int n_domains) {
  check_config(n_domains >= 2, "need at least 2 domains");
  AffinityState state;
  state.isolated = Eigen::MatrixXd::Zero(n_domains, n_domains);
  state.hybrid = Eigen::MatrixXd::Zero(n_domains, n_domains);
  state.mixed_sets.resize(n_domains);
  for (int u = 0; u < n_domains; ++u) {
    state.mixed_sets[u].resize(n_domains);
    for (int v = 0; v < n_domains; ++v) state.mixed_sets[u][v] = v;
  }
  state.round = 0;
  return state;
}

std::vector<const Sample*> probe_batch(const Corpus& corpus,
                                       const std::vector<DomainId>& domains,
                                       int batch_size, std::uint64_t seed) {
  const std::vector<int> alloc = corpus.batch_allocation(domains, batch_size);
  std::vector<const Sample*> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < domains.size(); ++i) {
    const auto& pool = corpus.split_of(domains[i], Split::kTrain);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(domains[i])));
    for (int k = 0; k < alloc[i]; ++k) {
      batch.push_back(&pool[rng.next_below(pool.size())]);
    }
  }
  return batch;
}

std::uint64_t probe_batch_seed(std::uint64_t root, int round,
                               std::string_view kind, std::uint64_t set_key,
                               int step) {
  std::uint64_t s = mix_seed(root, "probe-batch");
  s = mix_seed(s, static_cast<std::uint64_t>(round));
  s = mix_seed(s, kind);
  s = mix_seed(s, set_key);
  return mix_seed(s, static_cast<std::uint64_t>(step));
}

Predictor probe_fork(const Predictor& model, const Corpus& corpus,
                     const std::vector<DomainId>& domains,
                     const AffinityConfig& config, int round,
                     std::string_view kind, std::uint64_t set_key) {
  Predictor fork = model;
  for (int step = 0; step < config.lookahead_batches; ++step) {
    const auto batch =
        probe_batch(corpus, domains, config.batch_size,
                    probe_batch_seed(config.seed, round, kind, set_key, step));
    fork.train_step(batch);
  }
  return fork;
}

std::vector<double> probe_losses(const Predictor& model,
                                 const Corpus& corpus) {
  std::vector<double> losses(corpus.domain_count());
  for (DomainId v = 0; v < corpus.domain_count(); ++v) {
    DenseBatch batch = assemble_split(corpus, v, Split::kProbe);
    check_data(batch.size() > 0,
               "domain " + std::to_string(v) + " has an empty probe split");
    losses[v] = model.loss_sum(batch);
  }
  return losses;
}

namespace {

// Smoothed update with the denominator guard: when the reference loss is
// vanishing, the instantaneous term is dropped and the entry decays.
void fold_entry(Eigen::MatrixXd& matrix, int u, int v, double numerator,
                double denominator, double alpha, double eps) {
  const double previous = matrix(u, v);
  if (denominator < eps) {
    matrix(u, v) = alpha * previous;
    return;
  }
  matrix(u, v) = alpha * previous + (1.0 - alpha) * (1.0 - numerator / denominator);
}

std::vector<DomainId> erase_member(const std::vector<DomainId>& set,
                                   DomainId member) {
  std::vector<DomainId> out;
  out.reserve(set.size());
  for (DomainId d : set) {
    if (d != member) out.push_back(d);
  }
  return out;
}

}  // namespace

void probe_isolated(const Predictor& model, const Corpus& corpus,
                    AffinityState& state, const AffinityConfig& config) {
  const int n = corpus.domain_count();
  const std::vector<double> base = probe_losses(model, corpus);
  for (DomainId u = 0; u < n; ++u) {
    const std::vector<DomainId> only_u{u};
    const Predictor fork =
        probe_fork(model, corpus, only_u, config, state.round, "isolated",
                   hash_domain_set(only_u));
    const std::vector<double> after = probe_losses(fork, corpus);
    for (DomainId v = 0; v < n; ++v) {
      fold_entry(state.isolated, u, v, after[v], base[v], config.alpha,
                 config.loss_epsilon);
    }
  }
}

void probe_hybrid(const Predictor& model, const Corpus& corpus,
                  AffinityState& state, const AffinityConfig& config) {
  const int n = corpus.domain_count();
  check_data(static_cast<int>(state.mixed_sets.size()) == n,
             "mixed sets do not cover all domains");

  // Probe losses of the state trained on a given set, memoized by set so
  // shared mixed sets cost one probe each.
  std::map<std::uint64_t, std::vector<double>> cache;
  auto losses_for = [&](const std::vector<DomainId>& set) {
    const std::uint64_t key = hash_domain_set(set);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const Predictor fork =
        probe_fork(model, corpus, set, config, state.round, "mixed", key);
    return cache.emplace(key, probe_losses(fork, corpus)).first->second;
  };

  std::vector<double> base;  // baseline, only needed for the singleton fallback
  for (DomainId u = 0; u < n; ++u) {
    const std::vector<DomainId>& mixed = state.mixed_sets[u];
    check_data(std::find(mixed.begin(), mixed.end(), u) != mixed.end(),
               "mixed set of domain " + std::to_string(u) +
                   " does not contain it");
    const std::vector<DomainId> without = erase_member(mixed, u);
    if (without.empty()) {
      // Singleton mixed set: this row's instantaneous term is the isolated
      // one (probe on u alone against the pre-probe state).
      if (base.empty()) base = probe_losses(model, corpus);
      const std::vector<DomainId> only_u{u};
      const Predictor fork =
          probe_fork(model, corpus, only_u, config, state.round, "isolated",
                     hash_domain_set(only_u));
      const std::vector<double> after = probe_losses(fork, corpus);
      for (DomainId v = 0; v < n; ++v) {
        fold_entry(state.hybrid, u, v, after[v], base[v], config.alpha,
                   config.loss_epsilon);
      }
      continue;
    }
    const std::vector<double>& with_u = losses_for(mixed);
    const std::vector<double>& without_u = losses_for(without);
    for (DomainId v = 0; v < n; ++v) {
      fold_entry(state.hybrid, u, v, with_u[v], without_u[v], config.alpha,
                 config.loss_epsilon);
    }
  }
}

TreatmentRecord probe_treatments(const Predictor& model, const Corpus& corpus,
                                 const AffinityConfig& config, int round) {
  const int n = corpus.domain_count();
  const int r_count = config.treatment_count;
  check_config(r_count >= 2, "treatment_count must be >= 2");
  check_config(config.inclusion_prob > 0.0 && config.inclusion_prob <= 1.0,
               "inclusion_prob must be in (0, 1]");

  TreatmentRecord record;
  record.effects.resize(r_count, n);
  record.subsets.reserve(r_count);

  Rng rng(mix_seed(mix_seed(config.seed, "treatment-sets"),
                   static_cast<std::uint64_t>(round)));
  for (int r = 0; r < r_count; ++r) {
    std::vector<DomainId> subset;
    int attempts = 0;
    while (subset.empty()) {
      check_data(++attempts <= 100,
                 "could not draw a nonempty treatment subset in 100 attempts");
      for (DomainId u = 0; u < n; ++u) {
        if (rng.next_bernoulli(config.inclusion_prob)) subset.push_back(u);
      }
    }
    record.subsets.push_back(std::move(subset));
  }

  const std::vector<double> base = probe_losses(model, corpus);
  for (int r = 0; r < r_count; ++r) {
    const Predictor fork =
        probe_fork(model, corpus, record.subsets[r], config, round,
                   "treatment", static_cast<std::uint64_t>(r));
    const std::vector<double> after = probe_losses(fork, corpus);
    for (DomainId v = 0; v < n; ++v) {
      record.effects(r, v) = base[v] < config.loss_epsilon
                                 ? 0.0
                                 : 1.0 - after[v] / base[v];
    }
  }
  return record;
}

void update_mixed_sets(AffinityState& state,
                       const std::vector<std::vector<DomainId>>& targets,
                       const std::vector<std::vector<DomainId>>& sources) {
  check_data(targets.size() == sources.size(),
             "targets and sources must pair up");
  for (std::size_t k = 0; k < targets.size(); ++k) {
    for (DomainId u : targets[k]) {
      std::vector<DomainId> mixed = sources[k];
      if (std::find(mixed.begin(), mixed.end(), u) == mixed.end()) {
        mixed.push_back(u);
      }
      std::sort(mixed.begin(), mixed.end());
      state.mixed_sets.at(u) = std::move(mixed);
    }
  }
}

}  // namespace cdc
