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

#include "newsrec/embeddings.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_set>

#include "newsrec/error.hpp"
#include "newsrec/random.hpp"

namespace newsrec::embeddings {

using corpus::Vocabulary;

autodiff::Tensor StaticTable::as_tensor() const { return autodiff::Tensor::from({rows, dim}, data); }

namespace {

bool parse_double(std::string_view s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> fields_of(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

StaticTable load_static_table(std::istream& in, const Vocabulary& vocab, bool trainable, std::uint64_t seed) {
  StaticTable table;
  table.rows = vocab.size();
  table.trainable = trainable;
  std::vector<std::uint8_t> found(vocab.size(), 0);
  std::string line;
  std::size_t line_no = 0;
  bool any = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = fields_of(line);
    if (fields.empty()) continue;
    if (!any) {
      if (fields.size() < 2) throw Error(ErrorKind::DimMismatch, "line " + std::to_string(line_no) + " has no values");
      table.dim = fields.size() - 1;
      table.data.assign(table.rows * table.dim, 0.0);
      any = true;
    }
    // Some published vector files contain words with embedded spaces; the
    // last `dim` fields are the values.
    if (fields.size() < table.dim + 1) {
      throw Error(ErrorKind::DimMismatch, "line " + std::to_string(line_no) + " has " +
                                              std::to_string(fields.size() - 1) + " values, expected " +
                                              std::to_string(table.dim));
    }
    const std::size_t word_fields = fields.size() - table.dim;
    std::string word(fields[0]);
    if (word_fields > 1) {
      double probe;
      if (parse_double(fields[1], probe)) {
        throw Error(ErrorKind::DimMismatch, "line " + std::to_string(line_no) + " has " +
                                                std::to_string(fields.size() - 1) + " values, expected " +
                                                std::to_string(table.dim));
      }
      for (std::size_t i = 1; i < word_fields; ++i) word += " " + std::string(fields[i]);
    }
    if (!vocab.contains(word)) continue;
    const int id = vocab.id(word);
    if (id < Vocabulary::kReserved || found[static_cast<std::size_t>(id)]) continue;
    double* row = table.data.data() + static_cast<std::size_t>(id) * table.dim;
    for (std::size_t j = 0; j < table.dim; ++j) {
      if (!parse_double(fields[word_fields + j], row[j])) {
        throw Error(ErrorKind::DimMismatch, "line " + std::to_string(line_no) + ": non-numeric value");
      }
    }
    found[static_cast<std::size_t>(id)] = 1;
  }
  if (!any) throw Error(ErrorKind::EmptyFile, "no vectors in static embedding file");

  Rng rng(seed);
  std::size_t hits = 0;
  for (std::size_t id = 1; id < table.rows; ++id) {
    if (found[id]) {
      ++hits;
      continue;
    }
    if (trainable) {
      double* row = table.data.data() + id * table.dim;
      for (std::size_t j = 0; j < table.dim; ++j) row[j] = uniform(rng, -0.1, 0.1);
    }
  }
  const std::size_t regular = table.rows > static_cast<std::size_t>(Vocabulary::kReserved)
                                  ? table.rows - Vocabulary::kReserved
                                  : 0;
  table.coverage = regular ? static_cast<double>(hits) / static_cast<double>(regular) : 1.0;
  return table;
}

StaticTable load_static_table_file(const std::filesystem::path& path, const Vocabulary& vocab, bool trainable,
                                   std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::DataMissing, "cannot open " + path.string());
  return load_static_table(in, vocab, trainable, seed);
}

StaticTable random_static_table(std::size_t rows, std::size_t dim, bool trainable, std::uint64_t seed,
                                double range) {
  StaticTable t;
  t.rows = rows;
  t.dim = dim;
  t.trainable = trainable;
  t.data.assign(rows * dim, 0.0);
  Rng rng(seed);
  for (std::size_t i = dim; i < t.data.size(); ++i) t.data[i] = uniform(rng, -range, range);
  return t;
}

autodiff::Tensor lookup_tokens(const StaticTable& table, std::span<const int> ids) {
  std::vector<double> out(ids.size() * table.dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.rows) {
      throw Error(ErrorKind::IdOutOfRange, "token id " + std::to_string(ids[i]));
    }
    const auto row = table.row(static_cast<std::size_t>(ids[i]));
    std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(i * table.dim));
  }
  return autodiff::Tensor::from({ids.size(), table.dim}, std::move(out));
}

std::string fingerprint(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string apply_prompt(std::string_view news_text, std::string_view tmpl) {
  std::string out(tmpl);
  const std::size_t pos = out.find(kPromptSlot);
  if (pos != std::string::npos) out.replace(pos, kPromptSlot.size(), news_text);
  return out;
}

void PrecomputedStore::add(const std::string& news_id, std::span<const float> vec) {
  if (vec.size() != dim_) {
    throw Error(ErrorKind::DimMismatch, news_id + ": width " + std::to_string(vec.size()) + " vs store " +
                                            std::to_string(dim_));
  }
  if (index_.count(news_id)) throw Error(ErrorKind::DuplicateId, news_id);
  index_.emplace(news_id, ids_.size());
  ids_.push_back(news_id);
  data_.insert(data_.end(), vec.begin(), vec.end());
}

bool PrecomputedStore::contains(std::string_view news_id) const { return index_.count(std::string(news_id)) != 0; }

std::span<const float> PrecomputedStore::lookup(std::string_view news_id) const {
  auto it = index_.find(std::string(news_id));
  if (it == index_.end()) throw Error(ErrorKind::MissingEmbedding, std::string(news_id));
  return {data_.data() + it->second * dim_, dim_};
}

namespace {

static_assert(std::endian::native == std::endian::little, "NRE1 IO assumes a little-endian host");

template <typename T>
void append(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}
  template <typename T>
  T take() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view take_bytes(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::TruncatedFile, origin_);
  }
  std::string_view bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

void write_tag(const SourceTag& tag, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "model=" << tag.model << "\npooling=" << tag.pooling << "\nl=" << tag.last_tokens
      << "\nprompt_hash=" << tag.prompt_hash << "\n";
}

SourceTag read_tag(const std::filesystem::path& path) {
  SourceTag tag;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "model") tag.model = value;
    else if (key == "pooling") tag.pooling = value;
    else if (key == "l") tag.last_tokens = value.empty() ? 0 : std::stoul(value);
    else if (key == "prompt_hash") tag.prompt_hash = value;
  }
  return tag;
}

std::filesystem::path tag_path(const std::filesystem::path& store_path) {
  return std::filesystem::path(store_path.string() + ".meta");
}

}  // namespace

std::string encode_interchange(const PrecomputedStore& store) {
  if (store.size() == 0) throw Error(ErrorKind::EmptyFile, "refusing to write an empty store");
  std::string out;
  out.reserve(12 + store.size() * (8 + store.dim() * 4));
  out.append("NRE1", 4);
  append<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  append<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
  for (const std::string& id : store.ids()) {
    if (id.size() > 0xFFFF) throw Error(ErrorKind::InvalidSpec, "news id longer than 65535 bytes");
    append<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out.append(id);
    const auto vec = store.lookup(id);
    out.append(reinterpret_cast<const char*>(vec.data()), vec.size() * sizeof(float));
  }
  return out;
}

PrecomputedStore decode_interchange(std::string_view bytes, const std::string& origin) {
  Reader r(bytes, origin);
  if (bytes.size() < 4 || bytes.substr(0, 4) != "NRE1") {
    if (bytes.size() < 4) throw Error(ErrorKind::TruncatedFile, origin);
    throw Error(ErrorKind::BadMagic, origin);
  }
  r.take_bytes(4);
  const auto count = r.take<std::uint32_t>();
  const auto dim = r.take<std::uint32_t>();
  PrecomputedStore store(dim);
  std::vector<float> vec(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.take<std::uint16_t>();
    std::string id(r.take_bytes(len));
    const auto raw = r.take_bytes(static_cast<std::size_t>(dim) * sizeof(float));
    std::memcpy(vec.data(), raw.data(), raw.size());
    store.add(id, vec);
  }
  if (r.remaining() != 0) {
    throw Error(ErrorKind::CountMismatch,
                origin + ": " + std::to_string(r.remaining()) + " bytes beyond the declared " +
                    std::to_string(count) + " entries");
  }
  return store;
}

void write_interchange(const PrecomputedStore& store, const std::filesystem::path& path) {
  const std::string bytes = encode_interchange(store);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
  if (!store.tag.empty()) write_tag(store.tag, tag_path(path));
}

PrecomputedStore read_interchange(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::DataMissing, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  PrecomputedStore store = decode_interchange(buf.str(), path.string());
  if (std::filesystem::exists(tag_path(path))) store.tag = read_tag(tag_path(path));
  return store;
}

std::vector<double> lookup_news(const PrecomputedStore& store, std::string_view news_id) {
  const auto v = store.lookup(news_id);
  return {v.begin(), v.end()};
}

void validate_prompt(const PrecomputedStore& store) {
  if (store.tag.pooling != "last-l") return;
  const std::string expected = fingerprint(kLlmPromptTemplate);
  if (store.tag.prompt_hash != expected) {
    throw Error(ErrorKind::PromptMismatch,
                "store prompt hash '" + store.tag.prompt_hash + "' differs from engine template hash " + expected);
  }
}

PrecomputedStore random_store(const std::vector<std::string>& ids, std::size_t dim, std::uint64_t seed,
                              std::size_t last_tokens) {
  PrecomputedStore store(dim);
  Rng rng(seed);
  std::vector<float> vec(dim);
  const double range = std::sqrt(3.0);
  for (const std::string& id : ids) {
    for (float& v : vec) v = static_cast<float>(uniform(rng, -range, range));
    store.add(id, vec);
  }
  store.tag.model = "random";
  store.tag.pooling = "last-l";
  store.tag.last_tokens = last_tokens;
  store.tag.prompt_hash = fingerprint(kLlmPromptTemplate);
  return store;
}

}  // namespace newsrec::embeddings
