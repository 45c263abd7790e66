#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "s2bt/data/vocab.hpp"
#include "s2bt/error.hpp"
#include "s2bt/keyvalue.hpp"
#include "s2bt/model/network.hpp"

// Model file layout, all integers and reals little-endian:
//
//   magic        4 bytes  "S2BT"
//   version      u32      1
//   header_len   u32      byte length of the header text
//   header       text     "key=value\n" lines: dimensions, dropout, lambda, ...
//   vocab_count  u32
//   vocab_count times:
//     name       str      u32 length + bytes ("words", "chars", "labels", "feature0", ...)
//     boundary   u8       1 if the vocabulary reserves the boundary id
//     entries    u32      count, then that many str (reserved entries included)
//   tensor_count u32
//   tensor_count times:
//     name       str
//     rank       u32
//     dims       rank x u64
//     values     product(dims) x f64, row-major
//
// A text manifest listing the header and every tensor's name and shape is
// written next to the file as <path>.manifest.

namespace s2bt::model {

inline constexpr char kModelMagic[4] = {'S', '2', 'B', 'T'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class U>
void put(std::ostream& os, U v) {
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(U) / 2; ++i) std::swap(bytes[i], bytes[sizeof(U) - 1 - i]);
  os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <class U>
U get(std::istream& is, const char* what) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U)))
    throw FormatError(std::string("model file truncated while reading ") + what);
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(U) / 2; ++i) std::swap(bytes[i], bytes[sizeof(U) - 1 - i]);
  U v;
  std::memcpy(&v, bytes, sizeof(U));
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const char* what) {
  const auto n = get<std::uint32_t>(is, what);
  if (n > (1u << 28)) throw FormatError(std::string("implausible string length for ") + what);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw FormatError(std::string("model file truncated while reading ") + what);
  return s;
}

inline std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace io

// Everything needed to rebuild a trained tagger.
template <std::floating_point T>
struct ModelBundle {
  Network<T> network;
  data::Vocabularies vocabs;
  double lambda = 0.0;
};

inline KeyValues model_header(const ModelConfig& c, double lambda) {
  std::string feats;
  for (std::size_t k = 0; k < c.feature_vocabs.size(); ++k)
    feats += (k ? "," : "") + std::to_string(c.feature_vocabs[k]);
  return {
      {"format_version", std::to_string(kModelVersion)},
      {"dtype", "f64"},
      {"word_vocab", std::to_string(c.word_vocab)},
      {"char_vocab", std::to_string(c.char_vocab)},
      {"label_vocab", std::to_string(c.label_vocab)},
      {"feature_vocabs", feats},
      {"word_dim", std::to_string(c.word_dim)},
      {"char_dim", std::to_string(c.char_dim)},
      {"char_hidden", std::to_string(c.char_hidden)},
      {"char_out", std::to_string(c.char_out)},
      {"label_dim", std::to_string(c.label_dim)},
      {"feature_dim", std::to_string(c.feature_dim)},
      {"hidden", std::to_string(c.hidden)},
      {"ffn_dim", std::to_string(c.ffn_width())},
      {"residual_blocks", c.residual_blocks ? "true" : "false"},
      {"dropout", io::real(c.dropout)},
      {"layer_norm_eps", io::real(c.layer_norm_eps)},
      {"lambda", io::real(lambda)},
  };
}

namespace detail {

inline const std::string& header_value(const KeyValues& kv, const std::string& key) {
  for (const auto& [k, v] : kv)
    if (k == key) return v;
  throw FormatError("model header lacks '" + key + "'");
}

inline std::size_t header_size(const KeyValues& kv, const std::string& key) {
  const std::string& v = header_value(kv, key);
  try {
    std::size_t used = 0;
    const auto n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw FormatError("model header: '" + key + "' is not an integer: " + v);
  }
}

inline double header_real(const KeyValues& kv, const std::string& key) {
  const std::string& v = header_value(kv, key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw FormatError("model header: '" + key + "' is not a number: " + v);
  }
}

inline ModelConfig config_from_header(const KeyValues& kv) {
  ModelConfig c;
  c.word_vocab = header_size(kv, "word_vocab");
  c.char_vocab = header_size(kv, "char_vocab");
  c.label_vocab = header_size(kv, "label_vocab");
  std::stringstream feats(header_value(kv, "feature_vocabs"));
  for (std::string item; std::getline(feats, item, ',');) {
    try {
      c.feature_vocabs.push_back(static_cast<std::size_t>(std::stoull(item)));
    } catch (const std::exception&) {
      throw FormatError("model header: bad feature_vocabs entry '" + item + "'");
    }
  }
  c.word_dim = header_size(kv, "word_dim");
  c.char_dim = header_size(kv, "char_dim");
  c.char_hidden = header_size(kv, "char_hidden");
  c.char_out = header_size(kv, "char_out");
  c.label_dim = header_size(kv, "label_dim");
  c.feature_dim = header_size(kv, "feature_dim");
  c.hidden = header_size(kv, "hidden");
  c.ffn_dim = header_size(kv, "ffn_dim");
  const std::string& rb = header_value(kv, "residual_blocks");
  if (rb != "true" && rb != "false") throw FormatError("model header: residual_blocks must be true or false");
  c.residual_blocks = rb == "true";
  c.dropout = header_real(kv, "dropout");
  c.layer_norm_eps = header_real(kv, "layer_norm_eps");
  return c;
}

inline std::vector<std::pair<std::string, const data::Vocabulary*>> named_vocabs(const data::Vocabularies& v) {
  std::vector<std::pair<std::string, const data::Vocabulary*>> out = {
      {"words", &v.words}, {"chars", &v.chars}, {"labels", &v.labels}};
  for (std::size_t k = 0; k < v.features.size(); ++k) out.emplace_back("feature" + std::to_string(k), &v.features[k]);
  return out;
}

}  // namespace detail

template <std::floating_point T>
void write_model(std::ostream& os, const Network<T>& net, const data::Vocabularies& vocabs, double lambda) {
  const ModelConfig& c = net.config();
  if (vocabs.words.size() != c.word_vocab || vocabs.chars.size() != c.char_vocab ||
      vocabs.labels.size() != c.label_vocab || vocabs.features.size() != c.feature_vocabs.size())
    throw ModelMismatchError("vocabularies do not match the network dimensions");
  os.write(kModelMagic, 4);
  io::put<std::uint32_t>(os, kModelVersion);
  std::string header;
  for (const auto& [k, v] : model_header(c, lambda)) header += k + "=" + v + "\n";
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));

  const auto vs = detail::named_vocabs(vocabs);
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(vs.size()));
  for (const auto& [name, v] : vs) {
    io::put_string(os, name);
    io::put<std::uint8_t>(os, v->has_boundary() ? 1 : 0);
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(v->size()));
    for (const auto& e : v->entries()) io::put_string(os, e);
  }

  const auto& items = net.parameters().items();
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(items.size()));
  for (const auto& [name, t] : items) {
    io::put_string(os, name);
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) io::put<std::uint64_t>(os, d);
    for (T v : t.values()) io::put<double>(os, static_cast<double>(v));
  }
  if (!os) throw FormatError("failed writing model");
}

template <std::floating_point T>
void write_manifest(std::ostream& os, const Network<T>& net, double lambda) {
  os << "# s2bt model manifest\n";
  for (const auto& [k, v] : model_header(net.config(), lambda)) os << k << " = " << v << '\n';
  os << "parameters = " << net.parameters().size() << '\n';
  os << "elements = " << net.parameters().element_count() << '\n';
  for (const auto& [name, t] : net.parameters().items()) os << "tensor " << name << ' ' << grad::shape_string(t.shape()) << '\n';
}

template <std::floating_point T>
void save_model(const std::string& path, const Network<T>& net, const data::Vocabularies& vocabs, double lambda) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError("cannot write " + path);
    write_model(out, net, vocabs, lambda);
  }
  std::ofstream manifest(path + ".manifest", std::ios::trunc);
  if (!manifest) throw IngestionError("cannot write " + path + ".manifest");
  write_manifest(manifest, net, lambda);
}

template <std::floating_point T>
ModelBundle<T> read_model(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kModelMagic, 4) != 0) throw FormatError("not a model file (bad magic)");
  const auto version = io::get<std::uint32_t>(is, "version");
  if (version != kModelVersion) throw FormatError("unsupported model format version " + std::to_string(version));
  const auto header_len = io::get<std::uint32_t>(is, "header length");
  std::string header(header_len, '\0');
  if (header_len && !is.read(header.data(), header_len)) throw FormatError("model file truncated in header");
  std::istringstream hs(header);
  KeyValues kv;
  try {
    kv = parse_key_values(hs, "model header");
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  if (detail::header_value(kv, "dtype") != "f64") throw FormatError("unsupported dtype in model header");
  const ModelConfig config = detail::config_from_header(kv);
  const double lambda = detail::header_real(kv, "lambda");

  data::Vocabularies vocabs;
  const auto vocab_count = io::get<std::uint32_t>(is, "vocabulary count");
  if (vocab_count < 3) throw FormatError("model file has fewer than three vocabularies");
  vocabs.features.clear();
  for (std::uint32_t k = 0; k < vocab_count; ++k) {
    const std::string name = io::get_string(is, "vocabulary name");
    const bool boundary = io::get<std::uint8_t>(is, "vocabulary flag") != 0;
    const auto n = io::get<std::uint32_t>(is, "vocabulary size");
    std::vector<std::string> entries;
    entries.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) entries.push_back(io::get_string(is, "vocabulary entry"));
    data::Vocabulary v;
    try {
      v = data::Vocabulary::from_entries(entries, boundary);
    } catch (const Error& e) {
      throw FormatError("vocabulary " + name + ": " + e.what());
    }
    const std::string expected = k == 0 ? "words" : k == 1 ? "chars" : k == 2 ? "labels" : "feature" + std::to_string(k - 3);
    if (name != expected) throw FormatError("expected vocabulary " + expected + ", found " + name);
    if (k == 0) vocabs.words = std::move(v);
    else if (k == 1) vocabs.chars = std::move(v);
    else if (k == 2) vocabs.labels = std::move(v);
    else vocabs.features.push_back(std::move(v));
  }
  if (vocabs.words.size() != config.word_vocab || vocabs.chars.size() != config.char_vocab ||
      vocabs.labels.size() != config.label_vocab || vocabs.features.size() != config.feature_vocabs.size())
    throw ModelMismatchError("model header dimensions disagree with the stored vocabularies");
  for (std::size_t k = 0; k < vocabs.features.size(); ++k)
    if (vocabs.features[k].size() != config.feature_vocabs[k])
      throw ModelMismatchError("feature vocabulary " + std::to_string(k) + " size disagrees with header");

  Network<T> net(config, 0);
  const auto& items = net.parameters().items();
  const auto tensor_count = io::get<std::uint32_t>(is, "tensor count");
  if (tensor_count != items.size())
    throw ModelMismatchError("model file has " + std::to_string(tensor_count) + " tensors, architecture expects " +
                             std::to_string(items.size()));
  for (const auto& [expected, t] : items) {
    const std::string name = io::get_string(is, "tensor name");
    if (name != expected) throw ModelMismatchError("expected tensor " + expected + ", found " + name);
    const auto rank = io::get<std::uint32_t>(is, "tensor rank");
    grad::Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::size_t>(io::get<std::uint64_t>(is, "tensor dims")));
    if (shape != t.shape())
      throw ModelMismatchError("tensor " + name + " has shape " + grad::shape_string(shape) + ", expected " +
                               grad::shape_string(t.shape()));
    grad::Tensor<T> target = t;
    for (auto& v : target.values()) v = static_cast<T>(io::get<double>(is, "tensor values"));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after the last tensor");
  return {std::move(net), std::move(vocabs), lambda};
}

template <std::floating_point T>
ModelBundle<T> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open model " + path);
  return read_model<T>(in);
}

}  // namespace s2bt::model
