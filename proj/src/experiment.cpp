// Copyright 2026 The newsrec Authors.
//
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

#include "newsrec/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "newsrec/error.hpp"

namespace newsrec::experiment {

namespace fs = std::filesystem;
using encoders::Architecture;
using encoders::LmKind;
using encoders::LmMode;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::InvalidSpec, what); }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) invalid("empty entry in list '" + value + "'");
    out.push_back(item);
  }
  if (out.empty()) invalid("empty list");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    invalid(key + ": expected a non-negative integer, got '" + text + "'");
  }
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    invalid(key + ": integer out of range '" + text + "'");
  }
}

double to_double(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || *end != '\0' || !std::isfinite(v)) invalid(key + ": expected a number, got '" + text + "'");
  return v;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& to_text) {
  std::string out;
  for (const auto& item : items) out += (out.empty() ? "" : ",") + to_text(item);
  return out;
}

std::string path_text(const std::optional<fs::path>& p) { return p ? p->string() : ""; }

/// Size fields of EncoderDims by key.
const std::vector<std::pair<const char*, std::size_t encoders::EncoderDims::*>>& dim_fields() {
  using D = encoders::EncoderDims;
  static const std::vector<std::pair<const char*, std::size_t D::*>> fields = {
      {"word_dim", &D::word_dim},       {"d_news", &D::d_news},
      {"news_heads", &D::news_heads},   {"user_heads", &D::user_heads},
      {"conv_width", &D::conv_width},   {"conv_filters", &D::conv_filters},
      {"attention_hidden", &D::attention_hidden}, {"category_dim", &D::category_dim},
      {"max_title", &D::max_title},     {"max_abstract", &D::max_abstract},
      {"max_history", &D::max_history}, {"plm_layers", &D::plm_layers},
      {"plm_dim", &D::plm_dim},         {"plm_heads", &D::plm_heads},
      {"plm_ffn", &D::plm_ffn},         {"llm_dim", &D::llm_dim},
  };
  return fields;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::DataMissing, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

void set_option(ExperimentSpec& spec, const std::string& key, const std::string& value) {
  if (key == "schema_version") {
    if (to_u64(key, value) != kSchemaVersion) invalid("unsupported schema_version " + value);
  } else if (key == "data_dir") {
    spec.data_dir = value;
  } else if (key == "output_dir") {
    spec.output_dir = value;
  } else if (key == "architectures") {
    spec.architectures.clear();
    for (const auto& a : split_list(value)) spec.architectures.push_back(encoders::parse_architecture(a));
  } else if (key == "lm") {
    spec.lm_modes.clear();
    for (const auto& m : split_list(value)) spec.lm_modes.push_back(encoders::parse_lm_mode(m));
  } else if (key == "negatives") {
    spec.negatives.clear();
    for (const auto& v : split_list(value)) spec.negatives.push_back(to_u64(key, v));
  } else if (key == "dropout") {
    spec.dropouts.clear();
    for (const auto& v : split_list(value)) spec.dropouts.push_back(to_double(key, v));
  } else if (key == "learning_rate") {
    spec.learning_rates.clear();
    for (const auto& v : split_list(value)) spec.learning_rates.push_back(to_double(key, v));
  } else if (key == "seeds") {
    spec.seeds.clear();
    for (const auto& v : split_list(value)) spec.seeds.push_back(to_u64(key, v));
  } else if (key == "batch_size") {
    spec.batch_size = to_u64(key, value);
  } else if (key == "max_epochs") {
    spec.max_epochs = to_u64(key, value);
  } else if (key == "patience") {
    spec.patience = to_u64(key, value);
  } else if (key == "last_tokens") {
    const auto l = to_u64(key, value);
    for (auto& m : spec.lm_modes) m.last_tokens = l;
  } else if (key == "slm_text") {
    if (value == "architecture") spec.dims.slm_text = encoders::SlmTextEncoder::Architecture;
    else if (value == "concat") spec.dims.slm_text = encoders::SlmTextEncoder::Concat;
    else invalid("slm_text must be 'architecture' or 'concat'");
  } else if (key == "plm_nrms_mhsa") {
    if (value != "0" && value != "1") invalid("plm_nrms_mhsa must be 0 or 1");
    spec.dims.plm_nrms_mhsa = value == "1";
  } else if (key == "min_word_count") {
    spec.min_word_count = to_u64(key, value);
    if (spec.min_word_count == 0) invalid("min_word_count must be ≥ 1");
  } else if (key == "validation_fraction") {
    spec.validation_fraction = to_double(key, value);
    if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0)) invalid("validation_fraction in (0, 1)");
  } else if (key == "static_vectors") {
    spec.static_vectors = value.empty() ? std::nullopt : std::optional<fs::path>(value);
  } else if (key == "news_embeddings") {
    spec.news_embeddings = value.empty() ? std::nullopt : std::optional<fs::path>(value);
  } else if (key == "abstract_embeddings") {
    spec.abstract_embeddings = value.empty() ? std::nullopt : std::optional<fs::path>(value);
  } else if (key == "plm_weights") {
    spec.plm_weights = value.empty() ? std::nullopt : std::optional<fs::path>(value);
  } else {
    for (const auto& [name, field] : dim_fields()) {
      if (key == name) {
        spec.dims.*field = to_u64(key, value);
        return;
      }
    }
    invalid("unknown key '" + key + "'");
  }
}

ExperimentSpec parse_spec(std::istream& in) {
  ExperimentSpec spec;
  bool versioned = false;
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  std::string last_tokens;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) invalid("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!seen.insert(key).second) invalid("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    if (key == "schema_version") versioned = true;
    // last_tokens applies to whichever LM list ends up parsed.
    if (key == "last_tokens") {
      last_tokens = value;
      continue;
    }
    set_option(spec, key, value);
  }
  if (!versioned) invalid("missing schema_version");
  if (!last_tokens.empty()) set_option(spec, "last_tokens", last_tokens);
  return spec;
}

ExperimentSpec parse_spec_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) invalid("cannot open config " + path.string());
  return parse_spec(in);
}

std::string format_spec(const ExperimentSpec& spec) {
  std::ostringstream out;
  out << "schema_version = " << kSchemaVersion << "\n";
  out << "data_dir = " << spec.data_dir.string() << "\n";
  out << "output_dir = " << spec.output_dir.string() << "\n";
  out << "architectures = " << join(spec.architectures, [](Architecture a) { return std::string(encoders::to_string(a)); }) << "\n";
  out << "lm = " << join(spec.lm_modes, [](const LmMode& m) { return encoders::to_string(m); }) << "\n";
  if (!spec.lm_modes.empty()) out << "last_tokens = " << spec.lm_modes.front().last_tokens << "\n";
  out << "negatives = " << join(spec.negatives, [](std::size_t k) { return std::to_string(k); }) << "\n";
  out << "dropout = " << join(spec.dropouts, num) << "\n";
  out << "learning_rate = " << join(spec.learning_rates, num) << "\n";
  out << "seeds = " << join(spec.seeds, [](std::uint64_t s) { return std::to_string(s); }) << "\n";
  out << "batch_size = " << spec.batch_size << "\n";
  out << "max_epochs = " << spec.max_epochs << "\n";
  out << "patience = " << spec.patience << "\n";
  for (const auto& [name, field] : dim_fields()) out << name << " = " << spec.dims.*field << "\n";
  out << "slm_text = " << (spec.dims.slm_text == encoders::SlmTextEncoder::Concat ? "concat" : "architecture") << "\n";
  out << "plm_nrms_mhsa = " << (spec.dims.plm_nrms_mhsa ? 1 : 0) << "\n";
  out << "min_word_count = " << spec.min_word_count << "\n";
  out << "validation_fraction = " << num(spec.validation_fraction) << "\n";
  out << "static_vectors = " << path_text(spec.static_vectors) << "\n";
  out << "news_embeddings = " << path_text(spec.news_embeddings) << "\n";
  out << "abstract_embeddings = " << path_text(spec.abstract_embeddings) << "\n";
  out << "plm_weights = " << path_text(spec.plm_weights) << "\n";
  return out.str();
}

fs::path resolve_data_dir(const fs::path& dir) {
  if (dir.is_absolute()) return dir;
  if (const char* root = std::getenv(kDataRootEnv); root && *root) return fs::path(root) / dir;
  return dir;
}

std::string canonical_config(const RunSpec& r) {
  std::map<std::string, std::string> kv;
  kv["architectures"] = encoders::to_string(r.run.architecture);
  kv["lm"] = encoders::to_string(r.run.lm);
  kv["last_tokens"] = std::to_string(r.run.lm.last_tokens);
  kv["negatives"] = std::to_string(r.run.negatives);
  kv["dropout"] = num(r.run.dropout);
  kv["learning_rate"] = num(r.run.learning_rate);
  kv["batch_size"] = std::to_string(r.run.batch_size);
  kv["max_epochs"] = std::to_string(r.run.max_epochs);
  kv["patience"] = std::to_string(r.run.patience);
  kv["seeds"] = std::to_string(r.run.seed);
  for (const auto& [name, field] : dim_fields()) kv[name] = std::to_string(r.dims.*field);
  kv["slm_text"] = r.dims.slm_text == encoders::SlmTextEncoder::Concat ? "concat" : "architecture";
  kv["plm_nrms_mhsa"] = r.dims.plm_nrms_mhsa ? "1" : "0";
  kv["data_dir"] = r.data_dir.lexically_normal().string();
  kv["min_word_count"] = std::to_string(r.min_word_count);
  kv["validation_fraction"] = num(r.validation_fraction);
  kv["static_vectors"] = path_text(r.static_vectors);
  kv["news_embeddings"] = path_text(r.news_embeddings);
  kv["abstract_embeddings"] = path_text(r.abstract_embeddings);
  kv["plm_weights"] = path_text(r.plm_weights);
  std::string out = "schema_version=" + std::to_string(kSchemaVersion) + "\n";
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string replica_key(const RunSpec& run) {
  RunSpec copy = run;
  copy.run.seed = 0;
  return canonical_config(copy);
}

std::string run_id(const RunSpec& run) { return embeddings::fingerprint(canonical_config(run)); }

std::vector<RunSpec> expand_grid(const ExperimentSpec& spec) {
  if (spec.architectures.empty() || spec.lm_modes.empty() || spec.negatives.empty() || spec.dropouts.empty() ||
      spec.learning_rates.empty() || spec.seeds.empty()) {
    invalid("every grid axis needs at least one value");
  }
  std::vector<RunSpec> out;
  std::map<std::string, std::string> configs_by_id;
  for (auto arch : spec.architectures)
    for (const auto& lm : spec.lm_modes)
      for (auto k : spec.negatives)
        for (auto dropout : spec.dropouts)
          for (auto lr : spec.learning_rates)
            for (auto seed : spec.seeds) {
              RunSpec r;
              r.run = {arch, lm, k, dropout, lr, spec.batch_size, spec.max_epochs, spec.patience, seed};
              training::validate(r.run);
              // Only the vectors a mode consumes enter its identity.
              const bool slm = lm.kind == LmKind::SlmFrozen || lm.kind == LmKind::SlmTuned;
              r.dims = spec.dims;
              r.data_dir = resolve_data_dir(spec.data_dir);
              r.min_word_count = spec.min_word_count;
              r.validation_fraction = spec.validation_fraction;
              if (slm) r.static_vectors = spec.static_vectors;
              if (lm.kind == LmKind::Llm) {
                r.news_embeddings = spec.news_embeddings;
                r.abstract_embeddings = spec.abstract_embeddings;
              }
              if (lm.kind == LmKind::Plm) {
                r.plm_weights = spec.plm_weights;
                if (lm.freeze_depth > spec.dims.plm_layers) {
                  throw Error(ErrorKind::BadFreezeDepth, "plm:" + std::to_string(lm.freeze_depth) + " exceeds " +
                                                             std::to_string(spec.dims.plm_layers) + " blocks");
                }
              }
              const std::string config = canonical_config(r);
              const std::string id = run_id(r);
              const auto [it, fresh] = configs_by_id.emplace(id, config);
              if (!fresh) {
                if (it->second == config) invalid("grid lists the same configuration twice");
                invalid("run id collision " + id);
              }
              out.push_back(std::move(r));
            }
  return out;
}

LoadedData load_data(const fs::path& data_dir, std::size_t min_word_count, std::size_t max_title,
                     std::size_t max_abstract) {
  const auto need = [](const fs::path& p) {
    if (!fs::exists(p)) throw Error(ErrorKind::DataMissing, "missing " + p.string());
    return p;
  };
  LoadedData data;
  corpus::NewsCatalog train_news = corpus::parse_news_file(need(data_dir / "train" / "news.tsv"));
  const corpus::NewsCatalog dev_news = corpus::parse_news_file(need(data_dir / "dev" / "news.tsv"));
  data.train = corpus::parse_behaviors_file(need(data_dir / "train" / "behaviors.tsv"));
  data.dev = corpus::parse_behaviors_file(need(data_dir / "dev" / "behaviors.tsv"));
  data.vocab = corpus::build_vocabulary(train_news, min_word_count);
  data.catalog = std::move(train_news);
  corpus::merge_catalog(data.catalog, dev_news);
  corpus::encode_catalog(data.catalog, data.vocab, max_title, max_abstract);
  return data;
}

std::unique_ptr<encoders::NewsRecModel> build_model(const RunSpec& run, const LoadedData& data,
                                                    const training::UserIndex& users, Resources& resources) {
  encoders::ModelConfig mc{run.run.architecture, run.run.lm, run.dims, run.run.seed};
  encoders::ModelResources res;
  res.vocab_size = data.vocab.size();
  res.num_categories = data.catalog.categories.size();
  res.num_subcategories = data.catalog.subcategories.size();
  res.num_users = users.rows();
  const LmKind kind = run.run.lm.kind;
  if ((kind == LmKind::SlmFrozen || kind == LmKind::SlmTuned) && run.static_vectors) {
    resources.word_table = embeddings::load_static_table_file(*run.static_vectors, data.vocab, kind == LmKind::SlmTuned,
                                                              derive_seed(run.run.seed, 3));
    res.word_table = &*resources.word_table;
  }
  if (kind == LmKind::Llm) {
    if (!run.news_embeddings) throw Error(ErrorKind::DataMissing, "LLM mode needs news_embeddings");
    resources.title_store = embeddings::read_interchange(*run.news_embeddings);
    res.title_store = &*resources.title_store;
    if (run.abstract_embeddings) {
      resources.abstract_store = embeddings::read_interchange(*run.abstract_embeddings);
      res.abstract_store = &*resources.abstract_store;
    }
  }
  if (kind == LmKind::Plm && run.plm_weights) {
    resources.plm_weights = autodiff::read_tensor_file(*run.plm_weights);
    res.plm_weights = &*resources.plm_weights;
  }
  return std::make_unique<encoders::NewsRecModel>(mc, res);
}

namespace {

nlohmann::ordered_json params_json(const evaluation::ParamAccount& a) {
  nlohmann::ordered_json j;
  j["total"] = a.total;
  j["trainable"] = a.trainable;
  for (std::size_t c = 0; c < a.by_component.size(); ++c) {
    const std::string name(autodiff::to_string(static_cast<autodiff::Component>(c)));
    j["components"][name] = {{"total", a.by_component[c].total}, {"trainable", a.by_component[c].trainable}};
  }
  return j;
}

evaluation::ParamAccount params_from_json(const nlohmann::json& j) {
  evaluation::ParamAccount a;
  a.total = j.at("total").get<std::size_t>();
  a.trainable = j.at("trainable").get<std::size_t>();
  for (std::size_t c = 0; c < a.by_component.size(); ++c) {
    const auto& e = j.at("components").at(std::string(autodiff::to_string(static_cast<autodiff::Component>(c))));
    a.by_component[c] = {e.at("total").get<std::size_t>(), e.at("trainable").get<std::size_t>()};
  }
  return a;
}

RunSpec parse_run_config(const std::string& text) {
  std::istringstream in(text);
  const ExperimentSpec single = parse_spec(in);
  auto grid = expand_grid(single);
  if (grid.size() != 1) invalid("run config is not a single configuration");
  // Paths come back verbatim so the id is stable.
  return grid.front();
}

}  // namespace

RunOutcome load_outcome(const fs::path& run_dir, const std::vector<corpus::Impression>& test) {
  RunOutcome out;
  out.dir = run_dir;
  out.spec = parse_run_config(read_text(run_dir / "config.txt"));
  out.id = run_id(out.spec);
  const auto metrics = nlohmann::json::parse(read_text(run_dir / "metrics.json"));
  out.validation_auc = metrics.at("validation_auc").get<double>();
  out.params = params_from_json(metrics.at("params"));
  out.test = evaluation::evaluate_run(evaluation::read_predictions_file(run_dir / "predictions.tsv"), test);
  out.reused = true;
  return out;
}

RunOutcome run_one(const RunSpec& run, const LoadedData& data, const fs::path& output_dir, const RunOptions& options) {
  const std::string id = run_id(run);
  const fs::path dir = output_dir / "runs" / id;
  if (!options.force && fs::exists(dir / "metrics.json")) {
    if (options.log) *options.log << "run " << id << " already complete\n";
    return load_outcome(dir, data.dev);
  }
  fs::create_directories(dir);
  const fs::path state = dir / "state.nrck";
  if (options.force) fs::remove(state);
  write_text(dir / "config.txt", canonical_config(run));

  auto [train, validation] = training::split_validation(data.train, run.validation_fraction);
  training::Dataset dataset{&data.catalog, std::move(train), std::move(validation), {}};
  dataset.users = training::UserIndex(dataset.train);
  Resources resources;
  auto model = build_model(run, data, dataset.users, resources);

  std::ofstream log(dir / "train.log", fs::exists(state) ? std::ios::app : std::ios::trunc);
  log << "run " << id << " " << encoders::to_string(run.run.architecture) << " " << encoders::to_string(run.run.lm)
      << " seed " << run.run.seed << "\n";
  const auto checkpoint = training::train_run(run.run, *model, dataset, {.state_path = state, .resume = true, .stop_after_epochs = std::nullopt, .log = &log});
  training::write_checkpoint(checkpoint, dir / "checkpoint.nrck");

  const auto predictions = training::predict(*model, data.catalog, dataset.users, data.dev);
  evaluation::write_predictions_file(predictions, dir / "predictions.tsv");

  RunOutcome out;
  out.spec = run;
  out.id = id;
  out.dir = dir;
  out.validation_auc = checkpoint.validation_auc;
  out.test = evaluation::evaluate_run(predictions, data.dev);
  out.params = evaluation::count_params(model->params());

  nlohmann::ordered_json m;
  m["run_id"] = id;
  m["validation_auc"] = checkpoint.validation_auc;
  m["best_epoch"] = checkpoint.epoch;
  for (const auto& e : checkpoint.history) {
    m["epochs"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation_auc", e.validation_auc}});
  }
  m["test"] = nlohmann::ordered_json::parse(evaluation::report_json(out.test));
  m["params"] = params_json(out.params);
  write_text(dir / "metrics.json", m.dump(2) + "\n");
  fs::remove(state);
  log << "test auc " << out.test.auc << "\n";
  if (options.log) {
    *options.log << "run " << id << " " << encoders::to_string(run.run.architecture) << " "
                 << encoders::to_string(run.run.lm) << " val_auc " << checkpoint.validation_auc << " test_auc "
                 << out.test.auc << "\n";
  }
  return out;
}

std::vector<RunOutcome> run_experiment(const ExperimentSpec& spec, const RunOptions& options) {
  const auto grid = expand_grid(spec);
  const auto& first = grid.front();
  const LoadedData data = load_data(first.data_dir, first.min_word_count, first.dims.max_title, first.dims.max_abstract);
  fs::create_directories(spec.output_dir);
  write_text(spec.output_dir / "experiment.txt", format_spec(spec));
  std::vector<RunOutcome> out;
  for (const auto& run : grid) out.push_back(run_one(run, data, spec.output_dir, options));
  return out;
}

std::vector<CellBest> grid_search(const ExperimentSpec& spec, const std::vector<RunOutcome>& runs) {
  std::vector<CellBest> out;
  for (auto arch : spec.architectures) {
    for (const auto& lm : spec.lm_modes) {
      const std::string lm_name = encoders::to_string(lm);
      std::map<std::string, ReplicaGroup> groups;  // ordered by replica key
      for (const auto& r : runs) {
        if (r.spec.run.architecture != arch || encoders::to_string(r.spec.run.lm) != lm_name) continue;
        const std::string key = replica_key(r.spec);
        auto& g = groups[key];
        g.key = key;
        g.runs.push_back(&r);
      }
      if (groups.empty()) {
        throw Error(ErrorKind::EmptyCell,
                    "no completed run for " + std::string(encoders::to_string(arch)) + " / " + lm_name);
      }
      const ReplicaGroup* best = nullptr;
      for (auto& [key, g] : groups) {
        std::vector<double> v;
        for (const auto* r : g.runs) v.push_back(r->validation_auc);
        g.mean_validation_auc = evaluation::pairwise_mean(v);
        if (!best || g.mean_validation_auc > best->mean_validation_auc) best = &g;
      }
      out.push_back({arch, lm, *best});
    }
  }
  return out;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd m;
  if (values.empty()) return m;
  m.mean = evaluation::pairwise_mean(values);
  if (values.size() > 1) {
    std::vector<double> sq;
    for (double v : values) sq.push_back((v - m.mean) * (v - m.mean));
    m.stddev = std::sqrt(evaluation::pairwise_sum(sq) / static_cast<double>(values.size() - 1));
  }
  return m;
}

double change_percent(double frozen_auc, double tuned_auc) { return 100.0 * (tuned_auc - frozen_auc) / frozen_auc; }

namespace {

std::string fmt(double v, int precision = 2) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string signed_percent(double v) { return (v >= 0 ? "+" : "") + fmt(v) + "%"; }

struct CellStats {
  const CellBest* cell;
  std::string lm;
  MeanStd metric[4];  // AUC, MRR, nDCG@5, nDCG@10
  std::optional<double> change;
};

/// The frozen counterpart a fine-tuned mode is compared against.
std::optional<std::string> frozen_counterpart(const LmMode& m) {
  if (m.kind == LmKind::SlmTuned) return "slm-frozen";
  if (m.kind == LmKind::Plm && m.freeze_depth > 0) return "plm-frozen";
  return std::nullopt;
}

}  // namespace

Report emit_report(const ExperimentSpec& spec, const std::vector<RunOutcome>& runs,
                   const std::vector<corpus::Impression>& test, const std::string& baseline) {
  const auto cells = grid_search(spec, runs);
  std::vector<CellStats> stats;
  for (const auto& cell : cells) {
    CellStats s{&cell, encoders::to_string(cell.lm), {}, std::nullopt};
    std::vector<double> v[4];
    for (const auto* r : cell.best.runs) {
      v[0].push_back(r->test.auc);
      v[1].push_back(r->test.mrr);
      v[2].push_back(r->test.ndcg5);
      v[3].push_back(r->test.ndcg10);
    }
    for (int i = 0; i < 4; ++i) s.metric[i] = mean_std(v[i]);
    stats.push_back(s);
  }
  for (auto& s : stats) {
    const auto frozen = frozen_counterpart(s.cell->lm);
    if (!frozen) continue;
    for (const auto& f : stats) {
      if (f.cell->architecture == s.cell->architecture && f.lm == *frozen) {
        s.change = change_percent(f.metric[0].mean, s.metric[0].mean);
      }
    }
  }

  Report report;
  std::ostringstream table, csv, params, depth;
  const char* names[4] = {"AUC", "MRR", "nDCG@5", "nDCG@10"};
  table << "architecture\tlm";
  for (const char* n : names) table << '\t' << n;
  table << "\tChange\n";
  csv << "architecture,lm,runs,auc_mean,auc_std,mrr_mean,mrr_std,ndcg5_mean,ndcg5_std,ndcg10_mean,ndcg10_std,"
         "change_percent\n";
  params << "architecture,lm,total,trainable";
  for (std::size_t c = 0; c < 4; ++c) {
    const std::string n(autodiff::to_string(static_cast<autodiff::Component>(c)));
    params << ',' << n << "_total," << n << "_trainable";
  }
  params << '\n';
  depth << "architecture,freeze_depth,auc_mean,auc_std\n";

  for (auto arch : spec.architectures) {
    double best[4] = {-1, -1, -1, -1};
    for (const auto& s : stats) {
      if (s.cell->architecture != arch) continue;
      for (int i = 0; i < 4; ++i) best[i] = std::max(best[i], s.metric[i].mean);
    }
    std::vector<std::pair<std::size_t, const CellStats*>> plm;
    for (const auto& s : stats) {
      if (s.cell->architecture != arch) continue;
      const std::string arch_name(encoders::to_string(arch));
      table << arch_name << '\t' << s.lm;
      for (int i = 0; i < 4; ++i) {
        std::string cell = fmt(s.metric[i].mean);
        if (s.cell->best.runs.size() > 1) cell += " ± " + fmt(s.metric[i].stddev);
        table << '\t' << (s.metric[i].mean == best[i] ? "**" + cell + "**" : cell);
      }
      table << '\t' << (s.change ? signed_percent(*s.change) : "-") << '\n';

      csv << arch_name << ',' << s.lm << ',' << s.cell->best.runs.size();
      for (int i = 0; i < 4; ++i) csv << ',' << fmt(s.metric[i].mean, 6) << ',' << fmt(s.metric[i].stddev, 6);
      csv << ',' << (s.change ? fmt(*s.change, 6) : "") << '\n';

      const auto& account = s.cell->best.runs.front()->params;
      params << arch_name << ',' << s.lm << ',' << account.total << ',' << account.trainable;
      for (const auto& c : account.by_component) params << ',' << c.total << ',' << c.trainable;
      params << '\n';

      if (s.cell->lm.kind == LmKind::Plm) plm.emplace_back(s.cell->lm.freeze_depth, &s);
    }
    std::sort(plm.begin(), plm.end());
    for (const auto& [k, s] : plm) {
      depth << encoders::to_string(arch) << ',' << k << ',' << fmt(s->metric[0].mean, 6) << ','
            << fmt(s->metric[0].stddev, 6) << '\n';
    }
  }
  report.table = table.str();
  report.table_csv = csv.str();
  report.params_csv = params.str();
  report.depth_csv = depth.str();

  // Engagement groups over the test users, replicas pooled per cell.
  const auto groups = evaluation::bucket_users(test, spec.dims.max_history);
  std::ostringstream groups_table, groups_csv;
  groups_csv << "architecture,group,users,mean_history,encoder,auc,relative_change\n";
  std::vector<evaluation::MetricReport> pooled(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    for (const auto* r : stats[i].cell->best.runs) {
      pooled[i].records.insert(pooled[i].records.end(), r->test.records.begin(), r->test.records.end());
    }
  }
  for (auto arch : spec.architectures) {
    std::vector<evaluation::NamedReport> named;
    for (std::size_t i = 0; i < stats.size(); ++i) {
      if (stats[i].cell->architecture == arch) named.push_back({stats[i].lm, &pooled[i]});
    }
    if (std::none_of(named.begin(), named.end(), [&](const auto& n) { return n.encoder == baseline; })) continue;
    const auto g = evaluation::group_report(groups, named, baseline);
    groups_table << encoders::to_string(arch) << "\n" << evaluation::group_report_table(g) << "\n";
    std::istringstream rows(evaluation::group_report_csv(g));
    std::string row;
    std::getline(rows, row);  // header
    while (std::getline(rows, row)) groups_csv << encoders::to_string(arch) << ',' << row << '\n';
  }
  report.groups_table = groups_table.str();
  report.groups_csv = groups_csv.str();
  return report;
}

void write_report(const Report& report, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / "table.txt", report.table);
  write_text(dir / "table.csv", report.table_csv);
  write_text(dir / "params.csv", report.params_csv);
  write_text(dir / "depth.csv", report.depth_csv);
  write_text(dir / "groups.txt", report.groups_table);
  write_text(dir / "groups.csv", report.groups_csv);
}

}  // namespace newsrec::experiment
