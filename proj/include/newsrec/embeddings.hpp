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
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "newsrec/autodiff.hpp"
#include "newsrec/corpus.hpp"

namespace newsrec::embeddings {

/// Vocabulary-aligned word vectors. Row 0 (pad) is always zero.
struct StaticTable {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> data;  // rows × dim, row-major
  bool trainable = false;
  /// |vocab ∩ file words| / |vocab| over non-reserved entries; 1 for random tables.
  double coverage = 1.0;

  std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  autodiff::Tensor as_tensor() const;
};

/// Reads "word v1 … vd" lines. Words absent from the file get zero rows when
/// frozen and seeded uniform(−0.1, 0.1) rows when trainable. Throws
/// DimMismatch(line) and EmptyFile.
StaticTable load_static_table(std::istream& in, const corpus::Vocabulary& vocab, bool trainable,
                              std::uint64_t seed = 0);
StaticTable load_static_table_file(const std::filesystem::path& path, const corpus::Vocabulary& vocab,
                                   bool trainable, std::uint64_t seed = 0);

/// Seeded uniform(−range, range) table with a zero pad row.
StaticTable random_static_table(std::size_t rows, std::size_t dim, bool trainable, std::uint64_t seed,
                                double range = 0.1);

/// Row gather; pad rows come back zero. Throws IdOutOfRange.
autodiff::Tensor lookup_tokens(const StaticTable& table, std::span<const int> ids);

/// Slot marker inside the prompt template.
inline constexpr std::string_view kPromptSlot = "[$v$]";
/// Fill-in-the-blank template used for last-token pooling.
inline constexpr std::string_view kLlmPromptTemplate = "This news: [$v$] means in one word:";

/// 64-bit FNV-1a of the text, as 16 lowercase hex digits.
std::string fingerprint(std::string_view text);
std::string apply_prompt(std::string_view news_text, std::string_view tmpl = kLlmPromptTemplate);

/// Provenance of a precomputed store. Serialized next to the NRE1 file as
/// "<file>.meta" with key=value lines.
struct SourceTag {
  std::string model;
  std::string pooling;  // "cls" or "last-l"
  std::size_t last_tokens = 0;
  std::string prompt_hash;

  bool empty() const { return model.empty() && pooling.empty() && prompt_hash.empty(); }
};

/// news_id → 32-bit vector, all of one width.
class PrecomputedStore {
 public:
  PrecomputedStore() = default;
  explicit PrecomputedStore(std::size_t dim) : dim_(dim) {}

  /// Throws DuplicateId and DimMismatch.
  void add(const std::string& news_id, std::span<const float> vec);
  bool contains(std::string_view news_id) const;
  /// Exact stored vector. Throws MissingEmbedding.
  std::span<const float> lookup(std::string_view news_id) const;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  SourceTag tag;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// NRE1 layout: "NRE1", u32 count, u32 dim, then per entry a u16 id length,
/// the UTF-8 id bytes and dim little-endian f32 values. Throws on an empty store.
void write_interchange(const PrecomputedStore& store, const std::filesystem::path& path);
/// Throws BadMagic, TruncatedFile, CountMismatch, DuplicateId.
PrecomputedStore read_interchange(const std::filesystem::path& path);
std::string encode_interchange(const PrecomputedStore& store);
PrecomputedStore decode_interchange(std::string_view bytes, const std::string& origin = "<memory>");

/// Upcast copy of the stored vector. Throws MissingEmbedding.
std::vector<double> lookup_news(const PrecomputedStore& store, std::string_view news_id);

/// Checks that a last-token store was produced with the template this engine
/// uses. Throws PromptMismatch.
void validate_prompt(const PrecomputedStore& store);

/// Seeded N(0,1)-ish (uniform ±√3) store over `ids`, tagged as a last-l export.
PrecomputedStore random_store(const std::vector<std::string>& ids, std::size_t dim, std::uint64_t seed,
                              std::size_t last_tokens = 10);

}  // namespace newsrec::embeddings
