#include "bootplace/hashing.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "bootplace/image.hpp"

namespace bootplace {

namespace {

// SHA-1 per FIPS 180-4. Fine for content addressing; nothing here is a
// security boundary.
class Sha1 {
 public:
  void update(const void* data, size_t len) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    total_ += len;
    while (len > 0) {
      const size_t take = std::min(len, sizeof(block_) - fill_);
      std::memcpy(block_ + fill_, p, take);
      fill_ += take;
      p += take;
      len -= take;
      if (fill_ == sizeof(block_)) {
        process(block_);
        fill_ = 0;
      }
    }
  }

  std::string hex_digest() {
    const uint64_t bits = total_ * 8;
    const uint8_t one = 0x80;
    update(&one, 1);
    const uint8_t zero = 0x00;
    while (fill_ != 56) update(&zero, 1);
    uint8_t len_be[8];
    for (int i = 0; i < 8; ++i) len_be[i] = static_cast<uint8_t>(bits >> (56 - 8 * i));
    update(len_be, 8);

    std::ostringstream out;
    out << std::hex << std::setfill('0');
    for (uint32_t word : h_) out << std::setw(8) << word;
    return out.str();
  }

 private:
  void process(const uint8_t* chunk) {
    uint32_t w[80];
    for (int i = 0; i < 16; ++i)
      w[i] = (uint32_t(chunk[4 * i]) << 24) | (uint32_t(chunk[4 * i + 1]) << 16) |
             (uint32_t(chunk[4 * i + 2]) << 8) | uint32_t(chunk[4 * i + 3]);
    for (int i = 16; i < 80; ++i) w[i] = rotl(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);

    uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4];
    for (int i = 0; i < 80; ++i) {
      uint32_t f, k;
      if (i < 20) {
        f = (b & c) | (~b & d);
        k = 0x5A827999;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDC;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6;
      }
      const uint32_t tmp = rotl(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rotl(b, 30);
      b = a;
      a = tmp;
    }
    h_[0] += a;
    h_[1] += b;
    h_[2] += c;
    h_[3] += d;
    h_[4] += e;
  }

  static uint32_t rotl(uint32_t x, int n) { return (x << n) | (x >> (32 - n)); }

  std::array<uint32_t, 5> h_ = {0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0};
  uint8_t block_[64];
  size_t fill_ = 0;
  uint64_t total_ = 0;
};

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("hash_file: cannot open " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return std::move(buf).str();
}

}  // namespace

std::string sha1_hex(std::string_view data) {
  Sha1 h;
  h.update(data.data(), data.size());
  return h.hex_digest();
}

std::string blob_hash(std::string_view content) {
  Sha1 h;
  const std::string header = "blob " + std::to_string(content.size());
  h.update(header.data(), header.size() + 1);  // include the trailing NUL
  h.update(content.data(), content.size());
  return h.hex_digest();
}

std::string hash_file(const std::filesystem::path& path) {
  return blob_hash(read_file_bytes(path));
}

std::string hash_tree(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("hash_tree: not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  Sha1 h;
  for (const fs::path& p : files) {
    // "relpath\0" then the file's blob id, so both names and bytes count.
    const std::string rel = fs::relative(p, dir).generic_string();
    h.update(rel.data(), rel.size() + 1);
    const std::string id = hash_file(p);
    h.update(id.data(), id.size());
  }
  return h.hex_digest();
}

}  // namespace bootplace
