#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "embsim/embedding.hpp"
#include "embsim/error.hpp"
#include "embsim/hash.hpp"
#include "support.hpp"

namespace embsim {
namespace {

EmbeddingMatrix sample(std::size_t n = 5, std::size_t dim = 3, EmbeddingKind kind = EmbeddingKind::chunks) {
  std::mt19937_64 rng(11);
  auto m = testing::random_embeddings(rng, "model-x", n, dim, kind, "nf");
  m.chunking = ChunkingConfig{128, "whitespace"};
  return m;
}

std::uint32_t read_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[at + i]);
  return v;
}

TEST(Esf1, RoundTripIsBitExact) {
  for (auto kind : {EmbeddingKind::chunks, EmbeddingKind::queries}) {
    auto m = sample(7, 4, kind);
    m.data[3] = -0.0f;
    m.data[5] = std::numeric_limits<float>::denorm_min();
    const auto decoded = decode_esf1(encode_esf1(m));
    EXPECT_TRUE(bit_equal(m, decoded));
  }
}

TEST(Esf1, LayoutIsMagicHeaderPayloadChecksum) {
  const auto m = sample(2, 3);
  const std::string bytes = encode_esf1(m);
  EXPECT_EQ(bytes.substr(0, 4), "ESF1");
  const std::uint32_t header_len = read_u32(bytes, 4);
  EXPECT_EQ(bytes.size(), 8 + header_len + 2 * 3 * 4 + 8u);
  EXPECT_EQ(bytes[8], '{');
  float first = 0;
  std::memcpy(&first, bytes.data() + 8 + header_len, 4);
  EXPECT_EQ(first, m.data[0]);
  EXPECT_EQ(esf1_checksum(bytes), xxh64(std::string_view(bytes).substr(0, bytes.size() - 8)));
}

TEST(Esf1, EverySingleBitFlipIsRejected) {
  const std::string bytes = encode_esf1(sample(3, 2));
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    for (int bit = 0; bit < 8; ++bit) {
      std::string corrupt = bytes;
      corrupt[i] = static_cast<char>(corrupt[i] ^ (1 << bit));
      EXPECT_THROW(decode_esf1(corrupt), DataError) << "byte " << i << " bit " << bit;
    }
  }
}

TEST(Esf1, PayloadCorruptionIsAChecksumError) {
  std::string bytes = encode_esf1(sample());
  bytes[bytes.size() - 12] ^= 0x01;
  EXPECT_THROW(decode_esf1(bytes), ChecksumError);
}

TEST(Esf1, SizeErrorsAreDescriptive) {
  const auto m = sample(4, 3);
  std::string bytes = encode_esf1(m);
  const std::string truncated = bytes.substr(0, bytes.size() - 3);
  try {
    decode_esf1(truncated, "x.esf1");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
  }
  EXPECT_THROW(decode_esf1("ESF1"), FormatError);
  EXPECT_THROW(decode_esf1("NOPE0000000000000000"), FormatError);
}

TEST(Esf1, ValidateRejectsBadMatrices) {
  auto m = sample();
  m.data[0] = std::nanf("");
  EXPECT_THROW(encode_esf1(m), DataError);
  m = sample();
  m.keys[1] = m.keys[0];
  EXPECT_THROW(encode_esf1(m), DataError);
  m = sample();
  m.data.pop_back();
  EXPECT_THROW(encode_esf1(m), DataError);
}

TEST(Esf1, ExportImportThroughFiles) {
  testing::TempDir dir;
  const auto m = sample(6, 5);
  export_embeddings(m, dir / "m.esf1");
  EXPECT_TRUE(bit_equal(import_embeddings(dir / "m.esf1"), m));
  EXPECT_THROW(import_embeddings(dir / "missing.esf1"), DataError);
}

TEST(EmbeddingKind, Names) {
  EXPECT_EQ(parse_kind("chunks"), EmbeddingKind::chunks);
  EXPECT_EQ(to_string(EmbeddingKind::queries), "queries");
  EXPECT_THROW(parse_kind("docs"), DataError);
}

}  // namespace
}  // namespace embsim
