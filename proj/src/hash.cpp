#include "embsim/hash.hpp"

#include <bit>
#include <cstring>

namespace embsim {
namespace {

constexpr std::uint64_t kPrime1 = 0x9E3779B185EBCA87ULL;
constexpr std::uint64_t kPrime2 = 0xC2B2AE3D27D4EB4FULL;
constexpr std::uint64_t kPrime3 = 0x165667B19E3779F9ULL;
constexpr std::uint64_t kPrime4 = 0x85EBCA77C2B2AE63ULL;
constexpr std::uint64_t kPrime5 = 0x27D4EB2F165667C5ULL;

std::uint64_t read64(const std::byte* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | std::to_integer<std::uint64_t>(p[i]);
  return v;
}

std::uint64_t read32(const std::byte* p) {
  std::uint64_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | std::to_integer<std::uint64_t>(p[i]);
  return v;
}

std::uint64_t round(std::uint64_t acc, std::uint64_t input) {
  acc += input * kPrime2;
  acc = std::rotl(acc, 31);
  return acc * kPrime1;
}

std::uint64_t merge_round(std::uint64_t acc, std::uint64_t value) {
  acc ^= round(0, value);
  return acc * kPrime1 + kPrime4;
}

}  // namespace

Xxh64::Xxh64(std::uint64_t seed) : seed_(seed) {
  acc_ = {seed + kPrime1 + kPrime2, seed + kPrime2, seed, seed - kPrime1};
}

void Xxh64::update(std::string_view data) {
  update(std::as_bytes(std::span(data.data(), data.size())));
}

void Xxh64::update(std::span<const std::byte> data) {
  total_ += data.size();
  std::size_t pos = 0;
  if (buffered_ > 0) {
    const std::size_t take = std::min(data.size(), buffer_.size() - buffered_);
    std::memcpy(buffer_.data() + buffered_, data.data(), take);
    buffered_ += take;
    pos = take;
    if (buffered_ < buffer_.size()) return;
    for (int lane = 0; lane < 4; ++lane) acc_[lane] = round(acc_[lane], read64(buffer_.data() + 8 * lane));
    buffered_ = 0;
  }
  while (data.size() - pos >= 32) {
    const std::byte* p = data.data() + pos;
    for (int lane = 0; lane < 4; ++lane) acc_[lane] = round(acc_[lane], read64(p + 8 * lane));
    pos += 32;
  }
  buffered_ = data.size() - pos;
  if (buffered_ > 0) std::memcpy(buffer_.data(), data.data() + pos, buffered_);
}

std::uint64_t Xxh64::digest() const {
  std::uint64_t h;
  if (total_ >= 32) {
    h = std::rotl(acc_[0], 1) + std::rotl(acc_[1], 7) + std::rotl(acc_[2], 12) + std::rotl(acc_[3], 18);
    for (std::uint64_t lane : acc_) h = merge_round(h, lane);
  } else {
    h = seed_ + kPrime5;
  }
  h += total_;

  const std::byte* p = buffer_.data();
  std::size_t left = buffered_;
  while (left >= 8) {
    h ^= round(0, read64(p));
    h = std::rotl(h, 27) * kPrime1 + kPrime4;
    p += 8;
    left -= 8;
  }
  if (left >= 4) {
    h ^= read32(p) * kPrime1;
    h = std::rotl(h, 23) * kPrime2 + kPrime3;
    p += 4;
    left -= 4;
  }
  while (left > 0) {
    h ^= std::to_integer<std::uint64_t>(*p) * kPrime5;
    h = std::rotl(h, 11) * kPrime1;
    ++p;
    --left;
  }

  h ^= h >> 33;
  h *= kPrime2;
  h ^= h >> 29;
  h *= kPrime3;
  h ^= h >> 32;
  return h;
}

std::uint64_t xxh64(std::span<const std::byte> data, std::uint64_t seed) {
  Xxh64 state(seed);
  state.update(data);
  return state.digest();
}

std::uint64_t xxh64(std::string_view data, std::uint64_t seed) {
  Xxh64 state(seed);
  state.update(data);
  return state.digest();
}

std::string to_hex(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kDigits[value & 0xF];
    value >>= 4;
  }
  return out;
}

}  // namespace embsim
