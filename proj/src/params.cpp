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

#include "newsrec/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "newsrec/error.hpp"

namespace newsrec::autodiff {

std::string_view to_string(Component c) {
  switch (c) {
    case Component::LanguageModel: return "lm";
    case Component::FullyConnected: return "fc";
    case Component::Architecture: return "architecture";
    case Component::UserTable: return "user_table";
  }
  return "unknown";
}

Tensor ParamGraph::add(const std::string& name, Shape shape, Component component, Init init, Rng& rng,
                       bool trainable) {
  const std::size_t n = shape_size(shape);
  std::vector<double> values(n, 0.0);
  switch (init) {
    case Init::Zeros: break;
    case Init::Ones: std::fill(values.begin(), values.end(), 1.0); break;
    case Init::Uniform01:
      for (double& v : values) v = uniform(rng, -0.1, 0.1);
      break;
    case Init::Xavier: {
      double fan_in = 1, fan_out = 1;
      if (shape.size() == 3) {
        fan_in = static_cast<double>(shape[0] * shape[1]);
        fan_out = static_cast<double>(shape[2]);
      } else if (shape.size() >= 2) {
        fan_in = static_cast<double>(shape[0]);
        fan_out = static_cast<double>(n / shape[0]);
      } else if (shape.size() == 1) {
        fan_in = fan_out = static_cast<double>(shape[0]);
      }
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : values) v = uniform(rng, -limit, limit);
      break;
    }
  }
  return add(name, Tensor::from(std::move(shape), std::move(values)), component, trainable);
}

Tensor ParamGraph::add(const std::string& name, Tensor value, Component component, bool trainable) {
  if (index_.count(name)) throw Error(ErrorKind::DuplicateId, "parameter " + name);
  value.set_requires_grad(trainable);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{name, component, value, trainable});
  return value;
}

bool ParamGraph::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

Parameter& ParamGraph::at(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorKind::InvalidSpec, "unknown parameter " + std::string(name));
  return params_[it->second];
}

const Parameter& ParamGraph::at(std::string_view name) const {
  return const_cast<ParamGraph*>(this)->at(name);
}

void ParamGraph::set_trainable(std::string_view name, bool trainable) {
  Parameter& p = at(name);
  p.trainable = trainable;
  p.tensor.set_requires_grad(trainable);
}

void ParamGraph::set_trainable_prefix(std::string_view prefix, bool trainable) {
  for (Parameter& p : params_) {
    if (std::string_view(p.name).starts_with(prefix)) {
      p.trainable = trainable;
      p.tensor.set_requires_grad(trainable);
    }
  }
}

void ParamGraph::zero_grad() {
  for (Parameter& p : params_) p.tensor.zero_grad();
}

std::size_t ParamGraph::total_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.tensor.size();
  return n;
}

std::size_t ParamGraph::trainable_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_)
    if (p.trainable) n += p.tensor.size();
  return n;
}

void Adam::step(ParamGraph& graph) {
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (Parameter& p : graph.parameters()) {
    if (!p.trainable) continue;
    const auto grad = p.tensor.grad();
    if (grad.empty()) continue;
    auto values = p.tensor.mutable_values();
    Moments& mom = moments_[p.name];
    if (mom.first.size() != values.size()) {
      if (!mom.first.empty()) throw Error(ErrorKind::ShapeMismatch, "adam moments for " + p.name);
      mom.first.assign(values.size(), 0.0);
      mom.second.assign(values.size(), 0.0);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      mom.first[i] = config_.beta1 * mom.first[i] + (1.0 - config_.beta1) * g;
      mom.second[i] = config_.beta2 * mom.second[i] + (1.0 - config_.beta2) * g * g;
      const double mhat = mom.first[i] / c1;
      const double vhat = mom.second[i] / c2;
      values[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

void Adam::restore(std::uint64_t steps, std::map<std::string, Moments> moments) {
  step_ = steps;
  moments_ = std::move(moments);
}

GradCheckResult finite_diff_check(ParamGraph& graph, const std::function<Tensor()>& loss_fn, double eps,
                                  std::size_t max_coords_per_param, std::uint64_t seed, double floor,
                                  const FixedCoordinate& fixed) {
  graph.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);

  GradCheckResult result;
  Rng rng(seed);
  for (Parameter& p : graph.parameters()) {
    if (!p.trainable) continue;
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    auto values = p.tensor.mutable_values();
    std::vector<std::size_t> coords;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!fixed || !fixed(p, i)) coords.push_back(i);
    if (coords.size() > max_coords_per_param) {
      shuffle(std::span<std::size_t>(coords), rng);
      coords.resize(max_coords_per_param);
    }
    for (std::size_t idx : coords) {
      const double saved = values[idx];
      values[idx] = saved + eps;
      const double up = loss_fn().item();
      values[idx] = saved - eps;
      const double down = loss_fn().item();
      values[idx] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.empty() ? 0.0 : analytic[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates_checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p.name;
        result.worst_index = idx;
      }
    }
  }
  return result;
}

const Tensor* TensorFile::find(std::string_view name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

namespace {

static_assert(std::endian::native == std::endian::little, "container IO assumes a little-endian host");

constexpr char kMagic[4] = {'N', 'R', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error(ErrorKind::TruncatedFile, path);
  return v;
}

std::string get_string(std::istream& in, std::size_t len, const std::string& path) {
  std::string s(len, '\0');
  if (len && !in.read(s.data(), static_cast<std::streamsize>(len))) throw Error(ErrorKind::TruncatedFile, path);
  return s;
}

}  // namespace

void write_tensor_file(const TensorFile& file, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.meta.size()));
  for (const auto& [k, v] : file.meta) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(k.size()));
    out.write(k.data(), static_cast<std::streamsize>(k.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v.size()));
    out.write(v.data(), static_cast<std::streamsize>(v.size()));
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, t] : file.tensors) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(out, 0);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::DataMissing, "cannot open " + p);
  char magic[4];
  if (!in.read(magic, 4)) throw Error(ErrorKind::TruncatedFile, p);
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorKind::BadMagic, p);
  const auto version = get<std::uint32_t>(in, p);
  if (version != kVersion) throw Error(ErrorKind::BadMagic, p + ": unsupported version " + std::to_string(version));
  TensorFile file;
  const auto meta_count = get<std::uint32_t>(in, p);
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string key = get_string(in, get<std::uint16_t>(in, p), p);
    std::string value = get_string(in, get<std::uint32_t>(in, p), p);
    file.meta.emplace(std::move(key), std::move(value));
  }
  const auto count = get<std::uint32_t>(in, p);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in, get<std::uint16_t>(in, p), p);
    const auto dtype = get<std::uint8_t>(in, p);
    const auto rank = get<std::uint8_t>(in, p);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in, p));
    const std::size_t n = shape_size(shape);
    std::vector<double> values(n);
    if (dtype == 0) {
      if (n && !in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double))))
        throw Error(ErrorKind::TruncatedFile, p);
    } else if (dtype == 1) {
      std::vector<float> raw(n);
      if (n && !in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(float))))
        throw Error(ErrorKind::TruncatedFile, p);
      std::copy(raw.begin(), raw.end(), values.begin());
    } else {
      throw Error(ErrorKind::BadMagic, p + ": unknown dtype for " + name);
    }
    file.tensors.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorKind::CountMismatch, p + ": trailing bytes");
  return file;
}

TensorFile snapshot(const ParamGraph& graph, const Adam* adam) {
  TensorFile file;
  for (const Parameter& p : graph.parameters()) file.tensors.emplace_back(p.name, p.tensor.detach());
  if (adam) {
    file.meta["adam.steps"] = std::to_string(adam->steps());
    for (const auto& [name, m] : adam->moments()) {
      const std::size_t n = m.first.size();
      file.tensors.emplace_back("adam.m/" + name, Tensor::from({n}, m.first));
      file.tensors.emplace_back("adam.v/" + name, Tensor::from({n}, m.second));
    }
  }
  return file;
}

void load_parameters(ParamGraph& graph, const TensorFile& file, bool require_all) {
  for (Parameter& p : graph.parameters()) {
    const Tensor* src = file.find(p.name);
    if (!src) {
      if (require_all) throw Error(ErrorKind::DataMissing, "checkpoint lacks parameter " + p.name);
      continue;
    }
    if (src->shape() != p.tensor.shape()) throw Error(ErrorKind::ShapeMismatch, "checkpoint shape for " + p.name);
    std::copy(src->values().begin(), src->values().end(), p.tensor.mutable_values().begin());
  }
}

void load_adam(Adam& adam, const TensorFile& file) {
  std::map<std::string, Adam::Moments> moments;
  for (const auto& [name, t] : file.tensors) {
    if (name.starts_with("adam.m/")) {
      moments[name.substr(7)].first.assign(t.values().begin(), t.values().end());
    } else if (name.starts_with("adam.v/")) {
      moments[name.substr(7)].second.assign(t.values().begin(), t.values().end());
    }
  }
  auto it = file.meta.find("adam.steps");
  const std::uint64_t steps = it == file.meta.end() ? 0 : std::stoull(it->second);
  adam.restore(steps, std::move(moments));
}

}  // namespace newsrec::autodiff
