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

#include "cdc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cdc/rng.hpp"

namespace cdc {

std::uint64_t hash_domain_set(const std::vector<DomainId>& sorted_ids) {
  std::uint64_t h = 0x51'7c'c1'b7'27'22'0a'95ULL;
  for (DomainId id : sorted_ids) {
    h = mix_seed(h, static_cast<std::uint64_t>(id) + 1);
  }
  return h;
}

int FeatureSchema::numeric_count() const {
  return static_cast<int>(
      std::count_if(fields.begin(), fields.end(), [](const FieldSpec& f) {
        return f.kind == FieldSpec::Kind::kNumeric;
      }));
}

int FeatureSchema::categorical_count() const {
  return arity() - numeric_count();
}

namespace {

struct SplitCounts {
  int train = 0, probe = 0, test = 0;
};

SplitCounts split_counts(int n, const SplitConfig& cfg) {
  SplitCounts counts;
  counts.test = static_cast<int>(std::floor(n * cfg.test_fraction));
  const int rest = n - counts.test;
  if (cfg.probe_fraction.has_value()) {
    counts.probe = static_cast<int>(std::floor(n * *cfg.probe_fraction));
  } else {
    counts.probe = std::min(cfg.probe_size, std::max(0, rest - 1));
  }
  counts.train = n - counts.test - counts.probe;
  return counts;
}

}  // namespace

Corpus::Corpus(FeatureSchema schema, std::vector<Sample> rows,
               const SplitConfig& split)
    : schema_(std::move(schema)), seed_(split.seed) {
  check_data(!rows.empty(), "corpus has no rows");
  const int arity = schema_.arity();
  DomainId max_domain = 0;
  for (const Sample& row : rows) {
    check_data(static_cast<int>(row.values.size()) == arity,
               "ragged feature row: expected " + std::to_string(arity) +
                   " features, got " + std::to_string(row.values.size()));
    check_data(row.label == 0 || row.label == 1,
               "non-binary label " + std::to_string(row.label));
    check_data(row.domain >= 0, "negative domain id");
    max_domain = std::max(max_domain, row.domain);
  }
  const int n_domains = max_domain + 1;
  check_data(n_domains >= 2, "corpus must cover at least 2 domains");

  std::vector<std::vector<Sample>> by_domain(n_domains);
  for (Sample& row : rows) by_domain[row.domain].push_back(std::move(row));
  for (int u = 0; u < n_domains; ++u) {
    check_data(!by_domain[u].empty(),
               "domain " + std::to_string(u) + " has no samples");
  }

  train_.resize(n_domains);
  probe_.resize(n_domains);
  test_.resize(n_domains);
  double train_total = 0.0;
  std::vector<double> train_count(n_domains, 0.0);
  for (int u = 0; u < n_domains; ++u) {
    auto& pool = by_domain[u];
    const int n = static_cast<int>(pool.size());
    const SplitCounts counts = split_counts(n, split);
    Rng rng(mix_seed(mix_seed(split.seed, "split"), u));
    const auto perm = rng.permutation(pool.size());
    int pos = 0;
    for (int i = 0; i < counts.test; ++i) test_[u].push_back(pool[perm[pos++]]);
    for (int i = 0; i < counts.probe; ++i)
      probe_[u].push_back(pool[perm[pos++]]);
    for (int i = 0; i < counts.train; ++i)
      train_[u].push_back(pool[perm[pos++]]);
    train_count[u] = static_cast<double>(counts.train);
    train_total += train_count[u];
  }
  weights_.resize(n_domains);
  for (int u = 0; u < n_domains; ++u) weights_[u] = train_count[u] / train_total;
}

const std::vector<Sample>& Corpus::split_of(DomainId domain,
                                            Split split) const {
  check_data(domain >= 0 && domain < domain_count(),
             "unknown domain " + std::to_string(domain));
  switch (split) {
    case Split::kTrain:
      return train_[domain];
    case Split::kProbe:
      return probe_[domain];
    case Split::kTest:
      return test_[domain];
  }
  throw DataError("invalid split");
}

std::vector<DomainId> Corpus::all_domains() const {
  std::vector<DomainId> ids(domain_count());
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

std::vector<int> Corpus::batch_allocation(const std::vector<DomainId>& domains,
                                          int batch_size) const {
  check_data(!domains.empty(), "batch over empty domain set");
  double total = 0.0;
  for (DomainId u : domains) {
    check_data(u >= 0 && u < domain_count(), "unknown domain in batch set");
    check_data(!train_[u].empty(),
               "domain " + std::to_string(u) + " has no train samples");
    total += weights_[u];
  }
  // Largest-remainder apportionment; ties to the lower position.
  const int n = static_cast<int>(domains.size());
  std::vector<int> alloc(n, 0);
  std::vector<std::pair<double, int>> remainder(n);
  int assigned = 0;
  for (int i = 0; i < n; ++i) {
    const double share = batch_size * weights_[domains[i]] / total;
    alloc[i] = static_cast<int>(std::floor(share));
    assigned += alloc[i];
    remainder[i] = {share - alloc[i], i};
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < batch_size - assigned; ++k) {
    alloc[remainder[k % n].second] += 1;
  }
  return alloc;
}

std::vector<const Sample*> Corpus::next_batch(
    const std::vector<DomainId>& domains, int batch_size,
    BatchCursor& cursor) const {
  const std::vector<int> alloc = batch_allocation(domains, batch_size);
  std::vector<const Sample*> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < domains.size(); ++i) {
    const DomainId u = domains[i];
    const auto& pool = train_[u];
    const std::uint64_t n = pool.size();
    std::uint64_t pos = cursor.position[u];
    // Infinite stream: epoch e is a fresh seeded permutation of the train
    // split, so the batch is a pure function of (domain, position).
    std::uint64_t epoch = pos / n;
    std::vector<std::uint32_t> perm;
    auto load_epoch = [&](std::uint64_t e) {
      Rng rng(mix_seed(mix_seed(mix_seed(seed_, "stream"), u), e));
      perm = rng.permutation(pool.size());
    };
    load_epoch(epoch);
    for (int k = 0; k < alloc[i]; ++k) {
      if (pos / n != epoch) {
        epoch = pos / n;
        load_epoch(epoch);
      }
      batch.push_back(&pool[perm[pos % n]]);
      ++pos;
    }
    cursor.position[u] = pos;
  }
  return batch;
}

const std::vector<double>& Corpus::planted_weights(DomainId domain) const {
  check_data(!planted_weights_.empty(), "corpus has no planted structure");
  return planted_weights_.at(domain);
}

Corpus generate_synthetic(const PlantedSpec& spec) {
  SplitConfig split;
  split.seed = mix_seed(spec.seed, "split-seed");
  return generate_synthetic(spec, split);
}

Corpus generate_synthetic(const PlantedSpec& spec, const SplitConfig& split) {
  check_config(spec.groups >= 2, "planted groups must be >= 2");
  check_config(spec.domains_per_group >= 1, "domains_per_group must be >= 1");
  check_config(spec.feature_dim >= 2, "feature_dim must be >= 2");
  check_config(spec.samples_per_domain >= 3,
               "samples_per_domain must be >= 3 to form three splits");
  check_config(spec.noise_scale >= 0.0 && spec.conflict_scale >= 0.0,
               "scales must be >= 0");

  const int n_groups = spec.groups;
  const int n_domains = n_groups * spec.domains_per_group;
  const int dim = spec.feature_dim;
  const double flip_prob = std::min(1.0, spec.conflict_scale);

  FeatureSchema schema;
  schema.fields.assign(dim, FieldSpec{FieldSpec::Kind::kNumeric, 0});
  schema.names.resize(dim);
  for (int j = 0; j < dim; ++j) schema.names[j] = "f" + std::to_string(j);

  // Master weight vector; scaled so logits have O(1) magnitude.
  Rng master_rng(mix_seed(spec.seed, "master"));
  std::vector<double> master(dim);
  const double coord_scale = 3.0 / std::sqrt(static_cast<double>(dim));
  for (double& w : master) w = coord_scale * master_rng.next_normal();

  // Group flip masks: group g keeps coordinates j with j % G == g and flips
  // the rest with probability flip_prob. At flip_prob = 1 any two distinct
  // groups' planted vectors have negative correlation (strongly so for
  // G = 2 and 3), which makes cross-group joint training conflict.
  std::vector<std::vector<int>> mask(n_groups, std::vector<int>(dim, 1));
  for (int g = 0; g < n_groups; ++g) {
    Rng rng(mix_seed(mix_seed(spec.seed, "mask"), g));
    for (int j = 0; j < dim; ++j) {
      if (j % n_groups == g) continue;
      if (rng.next_bernoulli(flip_prob)) mask[g][j] = -1;
    }
  }

  std::vector<std::vector<double>> domain_weights(n_domains,
                                                  std::vector<double>(dim));
  std::vector<int> groups(n_domains);
  for (int u = 0; u < n_domains; ++u) {
    const int g = u / spec.domains_per_group;
    groups[u] = g;
    Rng rng(mix_seed(mix_seed(spec.seed, "domain-noise"), u));
    const double noise_coord =
        spec.noise_scale / std::sqrt(static_cast<double>(dim));
    for (int j = 0; j < dim; ++j) {
      domain_weights[u][j] =
          mask[g][j] * master[j] + noise_coord * rng.next_normal();
    }
  }

  std::vector<Sample> rows;
  rows.reserve(static_cast<std::size_t>(n_domains) * spec.samples_per_domain);
  for (int u = 0; u < n_domains; ++u) {
    Rng rng(mix_seed(mix_seed(spec.seed, "samples"), u));
    for (int i = 0; i < spec.samples_per_domain; ++i) {
      Sample s;
      s.domain = u;
      s.values.resize(dim);
      double logit = 0.0;
      for (int j = 0; j < dim; ++j) {
        s.values[j] = rng.next_normal();
        logit += domain_weights[u][j] * s.values[j];
      }
      const double p = 1.0 / (1.0 + std::exp(-logit));
      s.label = rng.next_bernoulli(p) ? 1 : 0;
      rows.push_back(std::move(s));
    }
  }

  Corpus corpus(std::move(schema), std::move(rows), split);
  corpus.planted_groups_ = std::move(groups);
  corpus.planted_weights_ = std::move(domain_weights);
  return corpus;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw DataError("cannot parse " + what + " value '" + text + "'");
  }
}

struct RawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

RawTable read_csv(const std::string& path) {
  std::ifstream in(path);
  check_data(in.good(), "cannot open file: " + path);
  RawTable table;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (header) {
      table.columns = std::move(cells);
      header = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  check_data(!table.columns.empty(), "empty CSV file: " + path);
  return table;
}

RawTable read_jsonl(const std::string& path) {
  std::ifstream in(path);
  check_data(in.good(), "cannot open file: " + path);
  RawTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("bad JSONL at line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    check_data(obj.is_object(),
               "JSONL line " + std::to_string(line_no) + " is not an object");
    if (table.columns.empty()) {
      for (auto it = obj.begin(); it != obj.end(); ++it)
        table.columns.push_back(it.key());
      std::sort(table.columns.begin(), table.columns.end());
    }
    std::vector<std::string> row(table.columns.size());
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
      auto it = obj.find(table.columns[i]);
      check_data(it != obj.end(), "JSONL line " + std::to_string(line_no) +
                                      " missing key '" + table.columns[i] + "'");
      if (it->is_string()) {
        row[i] = it->get<std::string>();
      } else {
        row[i] = it->dump();
      }
    }
    table.rows.push_back(std::move(row));
  }
  check_data(!table.columns.empty(), "empty JSONL file: " + path);
  return table;
}

}  // namespace

Corpus ingest(const std::string& path, FileFormat format,
              const IngestSchema& schema, const SplitConfig& split) {
  RawTable table =
      format == FileFormat::kCsv ? read_csv(path) : read_jsonl(path);

  auto column_index = [&](const std::string& name) {
    auto it = std::find(table.columns.begin(), table.columns.end(), name);
    check_data(it != table.columns.end(), "missing column '" + name + "'");
    return static_cast<int>(it - table.columns.begin());
  };
  const int domain_col = column_index(schema.domain_column);
  const int label_col = column_index(schema.label_column);

  std::vector<int> feature_cols;
  if (schema.feature_columns.empty()) {
    for (int i = 0; i < static_cast<int>(table.columns.size()); ++i) {
      if (i != domain_col && i != label_col) feature_cols.push_back(i);
    }
  } else {
    for (const auto& name : schema.feature_columns)
      feature_cols.push_back(column_index(name));
  }
  check_data(!feature_cols.empty(), "no feature columns");

  std::vector<bool> categorical(feature_cols.size(), false);
  for (const auto& name : schema.categorical_columns) {
    const int col = column_index(name);
    auto it = std::find(feature_cols.begin(), feature_cols.end(), col);
    check_data(it != feature_cols.end(),
               "categorical column '" + name + "' is not a feature column");
    categorical[it - feature_cols.begin()] = true;
  }

  // Dense domain ids by sorted raw key, so ids do not depend on row order.
  std::map<std::string, DomainId> domain_ids;
  for (const auto& row : table.rows) {
    check_data(row.size() == table.columns.size(),
               "ragged row: expected " + std::to_string(table.columns.size()) +
                   " cells, got " + std::to_string(row.size()));
    domain_ids.emplace(row[domain_col], 0);
  }
  check_data(domain_ids.size() >= 2,
             "file covers a single domain; need at least 2");
  {
    DomainId next = 0;
    for (auto& [key, id] : domain_ids) id = next++;
  }

  std::vector<int> max_cat_id(feature_cols.size(), 0);
  std::vector<Sample> rows;
  rows.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    Sample s;
    s.domain = domain_ids.at(row[domain_col]);
    const double label = parse_number(row[label_col], "label");
    check_data(label == 0.0 || label == 1.0,
               "non-binary label '" + row[label_col] + "'");
    s.label = static_cast<int>(label);
    s.values.resize(feature_cols.size());
    for (std::size_t i = 0; i < feature_cols.size(); ++i) {
      const double value = parse_number(row[feature_cols[i]], "feature");
      if (categorical[i]) {
        check_data(value >= 0.0 && value == std::floor(value),
                   "categorical feature must be a non-negative integer, got '" +
                       row[feature_cols[i]] + "'");
        max_cat_id[i] = std::max(max_cat_id[i], static_cast<int>(value));
      }
      s.values[i] = value;
    }
    rows.push_back(std::move(s));
  }

  FeatureSchema feature_schema;
  feature_schema.fields.resize(feature_cols.size());
  feature_schema.names.resize(feature_cols.size());
  for (std::size_t i = 0; i < feature_cols.size(); ++i) {
    feature_schema.names[i] = table.columns[feature_cols[i]];
    if (categorical[i]) {
      feature_schema.fields[i] = {FieldSpec::Kind::kCategorical,
                                  max_cat_id[i] + 1};
    }
  }

  return Corpus(std::move(feature_schema), std::move(rows), split);
}

}  // namespace cdc
