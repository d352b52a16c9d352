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

#include <vector>

#include <Eigen/Dense>

#include "cdc/common.hpp"

namespace cdc {

// Similarity kernel between two domains' treatment-effect columns. Both
// kernels report a value in [0, 1] after clamping, so arccos lands in
// [0, pi/2].
//
//  - kCenteredCosine: mean-center each column, cosine similarity, clamp.
//  - kDependenceContribution: cosine between the domains' dependence
//    contribution matrices. Treating each treatment row as a variable, the
//    column for domain u induces per-treatment centered distance profiles;
//    domain u's contribution to the dependence between treatments (r, s) is
//    the inner product of its two profiles. The kernel is the normalized
//    Frobenius inner product of these contribution matrices, a cosine in
//    dependence space.
//
// Near-zero embeddings (constant columns) use the documented convention:
// similarity 1 to self, 0 to every other domain.
enum class KernelChoice { kDependenceContribution, kCenteredCosine };

// MC[u, v] = arccos(clamp(kernel(MT[:, u], MT[:, v]), 0, 1)), symmetric,
// zero diagonal, entries in [0, pi/2]. MT must have at least 2 rows.
Eigen::MatrixXd distance_matrix(const Eigen::MatrixXd& treatment_effects,
                                KernelChoice kernel);

// Mean pairwise causal distance within the set (diagonal included in the
// normalization): (1/|S|^2) * sum over ordered pairs.
double cohesion(const std::vector<DomainId>& set,
                const Eigen::MatrixXd& distances);

// Relative-distance interaction weight for target in [0, 1]:
// min(1, |S| * sum_u MC[u, target] / (2 * sum_{u,v} MC[u, v])), with 0 when
// all intra-set distances vanish (a maximally cohesive set keeps the
// isolated view). `target` must be a member of `set`.
double interaction_coefficient(DomainId target,
                               const std::vector<DomainId>& set,
                               const Eigen::MatrixXd& distances);

// Affine blend of the two affinity views:
// (1 - lambda) * MI[u, v] + lambda * MH[u, v], lambda computed for `target`
// over `source_set`. When `target` is not a member, lambda is evaluated over
// source_set + {target} (the coefficient needs the target's distances to the
// set, and membership is how the formula is defined).
double transfer_gain(DomainId from, DomainId target,
                     const std::vector<DomainId>& source_set,
                     const Eigen::MatrixXd& isolated,
                     const Eigen::MatrixXd& hybrid,
                     const Eigen::MatrixXd& distances);

}  // namespace cdc
