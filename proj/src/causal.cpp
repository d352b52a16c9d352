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

#include "cdc/causal.hpp"

#include <algorithm>
#include <cmath>

namespace cdc {

namespace {

constexpr double kHalfPi = 1.5707963267948966192313216916398;
constexpr double kNormEps = 1e-30;

// kernel(u, v) = <e_u, e_v> / (|e_u| |e_v|) over embedding rows, with the
// degenerate-embedding convention (1 on the diagonal, 0 off it).
Eigen::MatrixXd cosine_gram(const Eigen::MatrixXd& embeddings) {
  const int n = static_cast<int>(embeddings.rows());
  Eigen::VectorXd norms(n);
  for (int u = 0; u < n; ++u) norms(u) = embeddings.row(u).norm();
  Eigen::MatrixXd sim(n, n);
  for (int u = 0; u < n; ++u) {
    sim(u, u) = 1.0;
    for (int v = u + 1; v < n; ++v) {
      double value = 0.0;
      if (norms(u) > kNormEps && norms(v) > kNormEps) {
        value = embeddings.row(u).dot(embeddings.row(v)) /
                (norms(u) * norms(v));
      }
      sim(u, v) = value;
      sim(v, u) = value;
    }
  }
  return sim;
}

// Columns mean-centered, domains embedded as the centered columns.
Eigen::MatrixXd centered_cosine_similarity(const Eigen::MatrixXd& effects) {
  Eigen::MatrixXd centered = effects;
  centered.rowwise() -= effects.colwise().mean();
  return cosine_gram(centered.transpose());
}

// Each treatment row is a variable over D domain observations. For variable
// r, A_r is the double-centered pairwise |MT[r,u] - MT[r,v]| distance
// matrix; row u of A_r is domain u's distance profile. Domain u's
// contribution to the dependence between variables (r, s) is
// <A_r.row(u), A_s.row(u)> (these contributions sum to the sample distance
// covariance), and the kernel is the cosine between contribution matrices.
Eigen::MatrixXd dependence_contribution_similarity(
    const Eigen::MatrixXd& effects) {
  const int n_treatments = static_cast<int>(effects.rows());
  const int n_domains = static_cast<int>(effects.cols());

  std::vector<Eigen::MatrixXd> profiles(n_treatments);
  for (int r = 0; r < n_treatments; ++r) {
    Eigen::MatrixXd dist(n_domains, n_domains);
    for (int u = 0; u < n_domains; ++u) {
      for (int v = 0; v < n_domains; ++v) {
        dist(u, v) = std::abs(effects(r, u) - effects(r, v));
      }
    }
    const Eigen::VectorXd row_mean = dist.rowwise().mean();
    const double total_mean = dist.mean();
    dist.colwise() -= row_mean;
    dist.rowwise() -= row_mean.transpose();
    dist.array() += total_mean;
    profiles[r] = std::move(dist);
  }

  // Contribution matrix per domain, flattened: entry (r, s) is
  // <profile_r.row(u), profile_s.row(u)>.
  Eigen::MatrixXd embeddings(n_domains, n_treatments * n_treatments);
  for (int u = 0; u < n_domains; ++u) {
    for (int r = 0; r < n_treatments; ++r) {
      for (int s = 0; s < n_treatments; ++s) {
        embeddings(u, r * n_treatments + s) =
            profiles[r].row(u).dot(profiles[s].row(u));
      }
    }
  }
  return cosine_gram(embeddings);
}

}  // namespace

Eigen::MatrixXd distance_matrix(const Eigen::MatrixXd& treatment_effects,
                                KernelChoice kernel) {
  check_data(treatment_effects.rows() >= 2,
             "treatment matrix needs at least 2 rows");
  check_data(treatment_effects.cols() >= 2,
             "treatment matrix needs at least 2 domains");
  const Eigen::MatrixXd sim =
      kernel == KernelChoice::kCenteredCosine
          ? centered_cosine_similarity(treatment_effects)
          : dependence_contribution_similarity(treatment_effects);
  const int n = static_cast<int>(sim.rows());
  Eigen::MatrixXd distances(n, n);
  for (int u = 0; u < n; ++u) {
    distances(u, u) = 0.0;
    for (int v = u + 1; v < n; ++v) {
      const double clamped = std::clamp(sim(u, v), 0.0, 1.0);
      const double d = std::acos(clamped);
      distances(u, v) = d;
      distances(v, u) = d;
    }
  }
  return distances;
}

double cohesion(const std::vector<DomainId>& set,
                const Eigen::MatrixXd& distances) {
  check_data(!set.empty(), "cohesion of an empty set");
  double total = 0.0;
  for (DomainId u : set) {
    for (DomainId v : set) total += distances(u, v);
  }
  const double size = static_cast<double>(set.size());
  return total / (size * size);
}

double interaction_coefficient(DomainId target,
                               const std::vector<DomainId>& set,
                               const Eigen::MatrixXd& distances) {
  check_data(std::find(set.begin(), set.end(), target) != set.end(),
             "interaction coefficient target must be in the set");
  double to_target = 0.0;
  double total = 0.0;
  for (DomainId u : set) {
    to_target += distances(u, target);
    for (DomainId v : set) total += distances(u, v);
  }
  if (total <= 0.0) return 0.0;
  const double size = static_cast<double>(set.size());
  return std::min(1.0, size * to_target / (2.0 * total));
}

double transfer_gain(DomainId from, DomainId target,
                     const std::vector<DomainId>& source_set,
                     const Eigen::MatrixXd& isolated,
                     const Eigen::MatrixXd& hybrid,
                     const Eigen::MatrixXd& distances) {
  double lambda;
  if (std::find(source_set.begin(), source_set.end(), target) !=
      source_set.end()) {
    lambda = interaction_coefficient(target, source_set, distances);
  } else {
    std::vector<DomainId> extended = source_set;
    extended.push_back(target);
    lambda = interaction_coefficient(target, extended, distances);
  }
  return (1.0 - lambda) * isolated(from, target) +
         lambda * hybrid(from, target);
}

}  // namespace cdc
