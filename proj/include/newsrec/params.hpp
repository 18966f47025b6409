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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "newsrec/autodiff.hpp"
#include "newsrec/random.hpp"

namespace newsrec::autodiff {

/// Parameter groups used for accounting.
enum class Component { LanguageModel, FullyConnected, Architecture, UserTable };

std::string_view to_string(Component c);

struct Parameter {
  std::string name;
  Component component;
  Tensor tensor;
  bool trainable;
};

enum class Init { Zeros, Ones, Xavier, Uniform01 };

/// Named parameters in insertion order. The tensor handles are shared with the
/// layers that use them, so toggling `trainable` takes effect on the next
/// forward pass.
class ParamGraph {
 public:
  /// Xavier uses fan_in = shape[0] and fan_out = the remaining extent, except
  /// for rank-3 conv filters where fan_in = k·d and fan_out = f.
  Tensor add(const std::string& name, Shape shape, Component component, Init init, Rng& rng,
             bool trainable = true);
  Tensor add(const std::string& name, Tensor value, Component component, bool trainable = true);

  [[nodiscard]] bool contains(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;

  void set_trainable(std::string_view name, bool trainable);
  /// Applies to every parameter whose name starts with `prefix`.
  void set_trainable_prefix(std::string_view prefix, bool trainable);

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  void zero_grad();
  std::size_t total_count() const;
  std::size_t trainable_count() const;

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moments are keyed by parameter name; frozen
/// parameters are skipped entirely.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(ParamGraph& graph);

  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::uint64_t steps() const { return step_; }

  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::uint64_t steps, std::map<std::string, Moments> moments);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

/// Central-difference check of every trainable parameter against the analytic
/// gradient of `loss_fn`. At most `max_coords_per_param` coordinates are
/// sampled per tensor. The relative error is |a − n| / max(|a|, |n|, floor).
/// Coordinates for which `fixed` returns true (constants such as a padding
/// row) are never sampled.
using FixedCoordinate = std::function<bool(const Parameter&, std::size_t)>;
GradCheckResult finite_diff_check(ParamGraph& graph, const std::function<Tensor()>& loss_fn,
                                  double eps = 1e-5, std::size_t max_coords_per_param = 24,
                                  std::uint64_t seed = 7, double floor = 1e-6, const FixedCoordinate& fixed = {});

/// Named-tensor container: parameters plus free-form string metadata.
struct TensorFile {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(std::string_view name) const;
};

/// Layout (little-endian): "NRCK", u32 version = 1, u32 meta count,
/// { u16 key len, key, u32 value len, value }, u32 tensor count,
/// { u16 name len, name, u8 dtype (0 = f64, 1 = f32), u8 rank, u64 dims[rank], data }.
void write_tensor_file(const TensorFile& file, const std::filesystem::path& path);
/// f32 payloads are widened to 64-bit on load.
TensorFile read_tensor_file(const std::filesystem::path& path);

/// Snapshot of every parameter (values only) plus optimizer moments when given.
TensorFile snapshot(const ParamGraph& graph, const Adam* adam = nullptr);
/// Copies values for every parameter present in `file`; missing names are an error
/// when `require_all` is set. Shapes must match.
void load_parameters(ParamGraph& graph, const TensorFile& file, bool require_all = true);
void load_adam(Adam& adam, const TensorFile& file);

}  // namespace newsrec::autodiff
