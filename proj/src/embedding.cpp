#include "embsim/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include <json.hpp>

#include "embsim/error.hpp"
#include "embsim/hash.hpp"
#include "io_util.hpp"

namespace embsim {
namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "ESF1";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = width - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

json header_json(const EmbeddingMatrix& m) {
  json keys = json::array();
  for (const auto& key : m.keys) {
    if (m.kind == EmbeddingKind::queries)
      keys.push_back(key.doc_id);
    else
      keys.push_back(json::array({key.doc_id, key.chunk_index}));
  }
  return json{{"format_version", kEsf1Version},
              {"model_id", m.model_id},
              {"dataset_id", m.dataset_id},
              {"kind", to_string(m.kind)},
              {"dim", m.dim},
              {"n", m.rows()},
              {"tokenizer_id", m.chunking.tokenizer_id},
              {"chunk_size", m.chunking.chunk_size},
              {"keys", std::move(keys)}};
}

}  // namespace

std::string_view to_string(EmbeddingKind kind) {
  return kind == EmbeddingKind::chunks ? "chunks" : "queries";
}

EmbeddingKind parse_kind(std::string_view name) {
  if (name == "chunks") return EmbeddingKind::chunks;
  if (name == "queries") return EmbeddingKind::queries;
  throw DataError("unknown embedding kind '" + std::string(name) + "'");
}

void EmbeddingMatrix::validate() const {
  if (dim == 0) throw DataError("embedding matrix " + model_id + "/" + dataset_id + ": dim must be positive");
  if (data.size() != keys.size() * dim)
    throw DataError("embedding matrix " + model_id + "/" + dataset_id + ": payload holds " +
                    std::to_string(data.size()) + " values, expected " + std::to_string(keys.size() * dim));
  std::unordered_set<ChunkKey> seen;
  seen.reserve(keys.size());
  for (const auto& key : keys)
    if (!seen.insert(key).second) throw DataError("embedding matrix: duplicate key " + to_string(key));
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!std::isfinite(data[i]))
      throw DataError("embedding matrix: non-finite value at row " + std::to_string(i / dim));
}

bool bit_equal(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  return a.model_id == b.model_id && a.dataset_id == b.dataset_id && a.kind == b.kind && a.dim == b.dim &&
         a.keys == b.keys && a.chunking == b.chunking && a.data.size() == b.data.size() &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

std::string encode_esf1(const EmbeddingMatrix& m) {
  m.validate();
  const std::string header = header_json(m).dump();
  std::string out;
  out.reserve(kMagic.size() + 4 + header.size() + m.data.size() * 4 + 8);
  out += kMagic;
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  if constexpr (std::endian::native == std::endian::little) {
    out.append(reinterpret_cast<const char*>(m.data.data()), m.data.size() * sizeof(float));
  } else {
    for (float v : m.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  put_u64(out, xxh64(out));
  return out;
}

std::uint64_t esf1_checksum(std::string_view bytes) {
  if (bytes.size() < 8) throw FormatError("ESF1 buffer too short for a checksum");
  return get_le(bytes, bytes.size() - 8, 8);
}

EmbeddingMatrix decode_esf1(std::string_view bytes, std::string_view source) {
  const std::string src(source);
  if (bytes.size() < 8 || bytes.substr(0, 4) != kMagic) throw FormatError(src + ": bad magic, not an ESF1 file");
  const std::size_t header_len = get_le(bytes, 4, 4);
  if (bytes.size() < 8 + header_len)
    throw FormatError(src + ": truncated header: expected at least " + std::to_string(8 + header_len) +
                      " bytes, got " + std::to_string(bytes.size()));

  EmbeddingMatrix m;
  std::size_t n = 0;
  try {
    const json header = json::parse(bytes.substr(8, header_len));
    const auto version = header.at("format_version").get<std::uint32_t>();
    if (version != kEsf1Version)
      throw FormatError(src + ": unsupported format_version " + std::to_string(version) + " (expected " +
                        std::to_string(kEsf1Version) + ")");
    m.model_id = header.at("model_id").get<std::string>();
    m.dataset_id = header.at("dataset_id").get<std::string>();
    m.kind = parse_kind(header.at("kind").get<std::string>());
    m.dim = header.at("dim").get<std::size_t>();
    n = header.at("n").get<std::size_t>();
    m.chunking.tokenizer_id = header.at("tokenizer_id").get<std::string>();
    m.chunking.chunk_size = header.at("chunk_size").get<std::uint32_t>();
    const json& keys = header.at("keys");
    if (!keys.is_array() || keys.size() != n)
      throw FormatError(src + ": key list length does not match n=" + std::to_string(n));
    m.keys.reserve(n);
    for (const auto& k : keys) {
      if (m.kind == EmbeddingKind::queries)
        m.keys.push_back(ChunkKey{k.get<std::string>(), 0});
      else
        m.keys.push_back(ChunkKey{k.at(0).get<std::string>(), k.at(1).get<std::uint32_t>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(src + ": invalid ESF1 header: " + e.what());
  }
  if (m.dim == 0) throw FormatError(src + ": header dim must be positive");

  const std::size_t payload_offset = 8 + header_len;
  const std::size_t expected = payload_offset + n * m.dim * sizeof(float) + 8;
  if (bytes.size() != expected) {
    const std::size_t available = bytes.size() >= payload_offset + 8 ? bytes.size() - payload_offset - 8 : 0;
    if (bytes.size() > payload_offset + 8 && n > 0 && available % (n * sizeof(float)) == 0) {
      throw FormatError(src + ": dimension mismatch: header dim=" + std::to_string(m.dim) + " but row bytes imply " +
                        std::to_string(available / (n * sizeof(float))));
    }
    throw FormatError(src + ": truncated or oversized file: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }

  const std::uint64_t stored = get_le(bytes, bytes.size() - 8, 8);
  const std::uint64_t actual = xxh64(bytes.substr(0, bytes.size() - 8));
  if (stored != actual)
    throw ChecksumError(src + ": checksum mismatch (stored " + to_hex(stored) + ", computed " + to_hex(actual) + ")");

  m.data.resize(n * m.dim);
  const char* payload = bytes.data() + payload_offset;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(m.data.data(), payload, m.data.size() * sizeof(float));
  } else {
    for (std::size_t i = 0; i < m.data.size(); ++i)
      m.data[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, payload_offset + 4 * i, 4)));
  }
  try {
    m.validate();
  } catch (const DataError& e) {
    throw FormatError(src + ": " + e.what());
  }
  return m;
}

void export_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  detail::write_file_atomic(path, encode_esf1(m));
}

EmbeddingMatrix import_embeddings(const std::filesystem::path& path) {
  return decode_esf1(detail::read_file(path), path.string());
}

}  // namespace embsim
