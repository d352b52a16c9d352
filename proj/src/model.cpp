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

#include "cdc/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cdc/rng.hpp"

namespace cdc {

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// BCE from the logit: max(z,0) - z*y + log(1 + exp(-|z|)).
double bce_from_logit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

constexpr double kScoreFloor = 1e-15;

}  // namespace

std::uint64_t PredictorConfig::shape_hash() const {
  std::uint64_t h = mix_seed(0xCDC0, "predictor-shape");
  for (const FieldSpec& f : schema.fields) {
    h = mix_seed(h, f.kind == FieldSpec::Kind::kCategorical ? 1u : 0u);
    h = mix_seed(h, static_cast<std::uint64_t>(f.cardinality));
  }
  h = mix_seed(h, static_cast<std::uint64_t>(embedding_dim));
  for (int width : hidden) h = mix_seed(h, static_cast<std::uint64_t>(width));
  h = mix_seed(h, static_cast<std::uint64_t>(slot_count));
  h = mix_seed(h, optimizer == Optimizer::kAdam ? 2u : 1u);
  return h;
}

bool ParamState::operator==(const ParamState& other) const {
  auto bits_equal = [](const std::vector<double>& a,
                       const std::vector<double>& b) {
    return a.size() == b.size() &&
           (a.empty() ||
            std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  };
  return shape_hash == other.shape_hash && step == other.step &&
         bits_equal(params, other.params) && bits_equal(adam_m, other.adam_m) &&
         bits_equal(adam_v, other.adam_v);
}

namespace {

constexpr std::uint32_t kStateMagic = 0x43444353;  // "CDCS"
constexpr std::uint32_t kStateVersion = 1;

template <typename T>
void append_raw(std::vector<std::uint8_t>& out, const T& value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T read_raw(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  check_data(pos + sizeof(T) <= bytes.size(), "truncated parameter state");
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

void append_vec(std::vector<std::uint8_t>& out, const std::vector<double>& v) {
  append_raw(out, static_cast<std::uint64_t>(v.size()));
  const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
  out.insert(out.end(), p, p + v.size() * sizeof(double));
}

std::vector<double> read_vec(std::span<const std::uint8_t> bytes,
                             std::size_t& pos) {
  const auto n = read_raw<std::uint64_t>(bytes, pos);
  check_data(pos + n * sizeof(double) <= bytes.size(),
             "truncated parameter state");
  std::vector<double> v(n);
  std::memcpy(v.data(), bytes.data() + pos, n * sizeof(double));
  pos += n * sizeof(double);
  return v;
}

}  // namespace

std::vector<std::uint8_t> ParamState::to_bytes() const {
  std::vector<std::uint8_t> out;
  append_raw(out, kStateMagic);
  append_raw(out, kStateVersion);
  append_raw(out, shape_hash);
  append_raw(out, step);
  append_vec(out, params);
  append_vec(out, adam_m);
  append_vec(out, adam_v);
  return out;
}

ParamState ParamState::from_bytes(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  check_data(read_raw<std::uint32_t>(bytes, pos) == kStateMagic,
             "not a parameter state file");
  check_data(read_raw<std::uint32_t>(bytes, pos) == kStateVersion,
             "unsupported parameter state version");
  ParamState state;
  state.shape_hash = read_raw<std::uint64_t>(bytes, pos);
  state.step = read_raw<std::uint64_t>(bytes, pos);
  state.params = read_vec(bytes, pos);
  state.adam_m = read_vec(bytes, pos);
  state.adam_v = read_vec(bytes, pos);
  return state;
}

DenseBatch assemble_batch(const FeatureSchema& schema,
                          std::span<const Sample* const> samples) {
  const int n = static_cast<int>(samples.size());
  const int n_num = schema.numeric_count();
  const int n_cat = schema.categorical_count();
  DenseBatch batch;
  batch.numeric.resize(n, n_num);
  batch.categorical.resize(n, n_cat);
  batch.labels.resize(n);
  batch.domains.resize(n);
  for (int i = 0; i < n; ++i) {
    const Sample& s = *samples[i];
    int num_j = 0, cat_j = 0;
    for (int f = 0; f < schema.arity(); ++f) {
      if (schema.fields[f].kind == FieldSpec::Kind::kNumeric) {
        batch.numeric(i, num_j++) = s.values[f];
      } else {
        batch.categorical(i, cat_j++) = static_cast<std::int32_t>(s.values[f]);
      }
    }
    batch.labels(i) = s.label;
    batch.domains[i] = s.domain;
  }
  return batch;
}

DenseBatch assemble_split(const Corpus& corpus, DomainId domain, Split split) {
  const auto& rows = corpus.split_of(domain, split);
  std::vector<const Sample*> ptrs(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) ptrs[i] = &rows[i];
  return assemble_batch(corpus.schema(), ptrs);
}

Predictor::Predictor(PredictorConfig config) : config_(std::move(config)) {
  check_config(config_.embedding_dim >= 1, "embedding_dim must be >= 1");
  check_config(config_.slot_count >= 1, "slot_count must be >= 1");
  check_config(config_.learning_rate > 0.0, "learning rate must be > 0");
  for (int width : config_.hidden)
    check_config(width >= 1, "hidden layer width must be >= 1");

  std::size_t offset = 0;
  for (const FieldSpec& f : config_.schema.fields) {
    if (f.kind == FieldSpec::Kind::kCategorical) {
      check_config(f.cardinality >= 1, "categorical cardinality must be >= 1");
      embedding_offsets_.push_back(offset);
      offset += static_cast<std::size_t>(f.cardinality) * config_.embedding_dim;
    }
  }
  int in_dim = trunk_input_dim();
  for (int width : config_.hidden) {
    layer_weight_offsets_.push_back(offset);
    offset += static_cast<std::size_t>(width) * in_dim;
    layer_bias_offsets_.push_back(offset);
    offset += width;
    in_dim = width;
  }
  head_weight_offset_ = offset;
  offset += static_cast<std::size_t>(config_.slot_count) * in_dim;
  head_bias_offset_ = offset;
  offset += config_.slot_count;

  params_.assign(offset, 0.0);
  adam_m_.assign(offset, 0.0);
  adam_v_.assign(offset, 0.0);

  // Seeded init: N(0, 1/sqrt(fan_in)) weights, zero biases, N(0, 0.1)
  // embeddings.
  Rng rng(mix_seed(config_.seed, "init"));
  std::size_t emb_index = 0;
  for (const FieldSpec& f : config_.schema.fields) {
    if (f.kind != FieldSpec::Kind::kCategorical) continue;
    const std::size_t count =
        static_cast<std::size_t>(f.cardinality) * config_.embedding_dim;
    for (std::size_t i = 0; i < count; ++i)
      params_[embedding_offsets_[emb_index] + i] = 0.1 * rng.next_normal();
    ++emb_index;
  }
  in_dim = trunk_input_dim();
  for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
    const int width = config_.hidden[l];
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (int i = 0; i < width * in_dim; ++i)
      params_[layer_weight_offsets_[l] + i] = scale * rng.next_normal();
    in_dim = width;
  }
  const double head_scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (int i = 0; i < config_.slot_count * in_dim; ++i)
    params_[head_weight_offset_ + i] = head_scale * rng.next_normal();
}

int Predictor::trunk_input_dim() const {
  return config_.schema.numeric_count() +
         config_.schema.categorical_count() * config_.embedding_dim;
}

int Predictor::trunk_output_dim() const {
  return config_.hidden.empty() ? trunk_input_dim() : config_.hidden.back();
}

void Predictor::set_slot_map(std::vector<int> domain_to_slot) {
  for (int slot : domain_to_slot) {
    check_config(slot >= 0 && slot < config_.slot_count,
                 "slot map entry out of range");
  }
  slot_map_ = std::move(domain_to_slot);
}

int Predictor::slot_of(DomainId domain) const {
  if (slot_map_.empty()) return 0;
  check_data(domain >= 0 && domain < static_cast<int>(slot_map_.size()),
             "domain " + std::to_string(domain) + " beyond configured slots");
  return slot_map_[domain];
}

Eigen::MatrixXd Predictor::trunk_input(const DenseBatch& batch) const {
  const int n = batch.size();
  const int n_num = config_.schema.numeric_count();
  const int emb_dim = config_.embedding_dim;
  Eigen::MatrixXd input(n, trunk_input_dim());
  if (n_num > 0) input.leftCols(n_num) = batch.numeric;
  int cat_index = 0;
  int field_index = 0;
  for (const FieldSpec& f : config_.schema.fields) {
    if (f.kind != FieldSpec::Kind::kCategorical) continue;
    const std::size_t table = embedding_offsets_[cat_index];
    const int col0 = n_num + cat_index * emb_dim;
    for (int i = 0; i < n; ++i) {
      const std::int32_t id = batch.categorical(i, cat_index);
      check_data(id >= 0 && id < f.cardinality,
                 "categorical id out of range in field " +
                     std::to_string(field_index));
      for (int j = 0; j < emb_dim; ++j)
        input(i, col0 + j) = params_[table + id * emb_dim + j];
    }
    ++cat_index;
    ++field_index;
  }
  return input;
}

Eigen::VectorXd Predictor::logits(
    const DenseBatch& batch, std::vector<Eigen::MatrixXd>* activations) const {
  Eigen::MatrixXd h = trunk_input(batch);
  if (activations) activations->push_back(h);
  int in_dim = trunk_input_dim();
  for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
    const int width = config_.hidden[l];
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        w(params_.data() + layer_weight_offsets_[l], width, in_dim);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + layer_bias_offsets_[l],
                                        width);
    h = ((h * w.transpose()).rowwise() + b.transpose()).cwiseMax(0.0);
    if (activations) activations->push_back(h);
    in_dim = width;
  }
  const int out_dim = trunk_output_dim();
  Eigen::VectorXd z(batch.size());
  for (int i = 0; i < batch.size(); ++i) {
    const int slot = slot_of(batch.domains[i]);
    Eigen::Map<const Eigen::VectorXd> head(
        params_.data() + head_weight_offset_ +
            static_cast<std::size_t>(slot) * out_dim,
        out_dim);
    z(i) = h.row(i).dot(head) + params_[head_bias_offset_ + slot];
  }
  return z;
}

double Predictor::forward(const Sample& sample) const {
  check_data(static_cast<int>(sample.values.size()) == config_.schema.arity(),
             "sample arity does not match model schema");
  const Sample* ptr = &sample;
  DenseBatch batch = assemble_batch(config_.schema, std::span(&ptr, 1));
  const double z = logits(batch, nullptr)(0);
  const double p = stable_sigmoid(z);
  return std::clamp(p, kScoreFloor, 1.0 - kScoreFloor);
}

Eigen::VectorXd Predictor::scores(const DenseBatch& batch) const {
  Eigen::VectorXd z = logits(batch, nullptr);
  for (int i = 0; i < z.size(); ++i) {
    z(i) = std::clamp(stable_sigmoid(z(i)), kScoreFloor, 1.0 - kScoreFloor);
  }
  return z;
}

double Predictor::loss_sum(const DenseBatch& batch) const {
  const Eigen::VectorXd z = logits(batch, nullptr);
  double total = 0.0;
  for (int i = 0; i < z.size(); ++i)
    total += bce_from_logit(z(i), batch.labels(i));
  return total;
}

double Predictor::loss_mean(const DenseBatch& batch) const {
  check_data(batch.size() > 0, "loss over empty batch");
  return loss_sum(batch) / batch.size();
}

std::map<DomainId, double> Predictor::loss(const Corpus& corpus,
                                           const std::vector<DomainId>& domains,
                                           Split split) const {
  std::map<DomainId, double> out;
  for (DomainId u : domains) {
    DenseBatch batch = assemble_split(corpus, u, split);
    check_data(batch.size() > 0, "empty split for domain " + std::to_string(u));
    out[u] = loss_sum(batch);
  }
  return out;
}

std::vector<double> Predictor::gradient(const DenseBatch& batch) const {
  check_data(batch.size() > 0, "gradient over empty batch");
  std::vector<Eigen::MatrixXd> h;  // h[0] = trunk input, h[l] post-ReLU
  const Eigen::VectorXd z = logits(batch, &h);
  const int n = batch.size();
  const int out_dim = trunk_output_dim();
  std::vector<double> grad(params_.size(), 0.0);

  Eigen::VectorXd dz(n);
  for (int i = 0; i < n; ++i)
    dz(i) = (stable_sigmoid(z(i)) - batch.labels(i)) / n;

  // Heads.
  Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(n, out_dim);
  for (int i = 0; i < n; ++i) {
    const int slot = slot_of(batch.domains[i]);
    Eigen::Map<const Eigen::VectorXd> head(
        params_.data() + head_weight_offset_ +
            static_cast<std::size_t>(slot) * out_dim,
        out_dim);
    Eigen::Map<Eigen::VectorXd> dhead(grad.data() + head_weight_offset_ +
                                          static_cast<std::size_t>(slot) *
                                              out_dim,
                                      out_dim);
    dhead += dz(i) * h.back().row(i).transpose();
    grad[head_bias_offset_ + slot] += dz(i);
    dh.row(i) = dz(i) * head.transpose();
  }

  // Trunk, back to front. h[l+1] = relu(h[l] W_l^T + b_l).
  int in_dim = trunk_input_dim();
  std::vector<int> in_dims(config_.hidden.size());
  for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
    in_dims[l] = in_dim;
    in_dim = config_.hidden[l];
  }
  for (int l = static_cast<int>(config_.hidden.size()) - 1; l >= 0; --l) {
    const int width = config_.hidden[l];
    // ReLU mask from the post-activation values.
    Eigen::MatrixXd dzl =
        dh.array() * (h[l + 1].array() > 0.0).cast<double>();
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>
        dw(grad.data() + layer_weight_offsets_[l], width, in_dims[l]);
    dw = dzl.transpose() * h[l];
    Eigen::Map<Eigen::VectorXd> db(grad.data() + layer_bias_offsets_[l], width);
    db = dzl.colwise().sum();
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        w(params_.data() + layer_weight_offsets_[l], width, in_dims[l]);
    dh = dzl * w;
  }

  // Embedding scatter. dh now holds the trunk-input gradient.
  const int n_num = config_.schema.numeric_count();
  const int emb_dim = config_.embedding_dim;
  int cat_index = 0;
  for (const FieldSpec& f : config_.schema.fields) {
    if (f.kind != FieldSpec::Kind::kCategorical) continue;
    const int col0 = n_num + cat_index * emb_dim;
    for (int i = 0; i < n; ++i) {
      const std::int32_t id = batch.categorical(i, cat_index);
      for (int j = 0; j < emb_dim; ++j)
        grad[embedding_offsets_[cat_index] + id * emb_dim + j] +=
            dh(i, col0 + j);
    }
    ++cat_index;
  }
  return grad;
}

void Predictor::apply_gradient(const std::vector<double>& grad) {
  const double lr = config_.learning_rate;
  if (config_.optimizer == PredictorConfig::Optimizer::kSgd) {
    for (std::size_t i = 0; i < params_.size(); ++i)
      params_[i] -= lr * grad[i];
    ++step_;
    return;
  }
  ++step_;
  const double b1 = config_.adam_beta1;
  const double b2 = config_.adam_beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_m_[i] = b1 * adam_m_[i] + (1.0 - b1) * grad[i];
    adam_v_[i] = b2 * adam_v_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double m_hat = adam_m_[i] / correction1;
    const double v_hat = adam_v_[i] / correction2;
    params_[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.adam_eps);
  }
}

double Predictor::train_step(const DenseBatch& batch) {
  const double loss = loss_mean(batch);
  apply_gradient(gradient(batch));
  return loss;
}

double Predictor::train_step(std::span<const Sample* const> samples) {
  return train_step(assemble_batch(config_.schema, samples));
}

ParamState Predictor::snapshot() const {
  ParamState state;
  state.shape_hash = config_.shape_hash();
  state.step = step_;
  state.params = params_;
  state.adam_m = adam_m_;
  state.adam_v = adam_v_;
  return state;
}

void Predictor::restore(const ParamState& state) {
  check_data(state.shape_hash == config_.shape_hash(),
             "parameter state shape does not match model config");
  check_data(state.params.size() == params_.size(),
             "parameter state size mismatch");
  params_ = state.params;
  adam_m_ = state.adam_m;
  adam_v_ = state.adam_v;
  step_ = state.step;
}

void Predictor::copy_slot(int from, int to) {
  check_config(from >= 0 && from < config_.slot_count && to >= 0 &&
                   to < config_.slot_count,
               "slot index out of range");
  if (from == to) return;
  const int out_dim = trunk_output_dim();
  const std::size_t src = head_weight_offset_ +
                          static_cast<std::size_t>(from) * out_dim;
  const std::size_t dst = head_weight_offset_ +
                          static_cast<std::size_t>(to) * out_dim;
  for (int j = 0; j < out_dim; ++j) {
    params_[dst + j] = params_[src + j];
    adam_m_[dst + j] = adam_m_[src + j];
    adam_v_[dst + j] = adam_v_[src + j];
  }
  params_[head_bias_offset_ + to] = params_[head_bias_offset_ + from];
  adam_m_[head_bias_offset_ + to] = adam_m_[head_bias_offset_ + from];
  adam_v_[head_bias_offset_ + to] = adam_v_[head_bias_offset_ + from];
}

}  // namespace cdc
