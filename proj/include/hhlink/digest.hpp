#pragma once

#include <sodium.h>

#include <array>
#include <fstream>
#include <string>
#include <string_view>

#include "hhlink/error.hpp"

namespace hhlink {

/// Incremental BLAKE2b-256 digest rendered as lowercase hex.
class Digest {
 public:
  Digest() {
    if (sodium_init() < 0) throw Error(ErrorCode::InvalidArgument, "libsodium initialisation failed");
    crypto_generichash_init(&state_, nullptr, 0, crypto_generichash_BYTES);
  }

  Digest& update(std::string_view bytes) {
    crypto_generichash_update(&state_, reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
    return *this;
  }

  std::string hex() {
    std::array<unsigned char, crypto_generichash_BYTES> out{};
    crypto_generichash_final(&state_, out.data(), out.size());
    std::string s(out.size() * 2, '0');
    sodium_bin2hex(s.data(), s.size() + 1, out.data(), out.size());
    return s;
  }

 private:
  crypto_generichash_state state_{};
};

inline std::string digest_of(std::string_view bytes) { return Digest().update(bytes).hex(); }

inline std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  Digest d;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    d.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return d.hex();
}

}  // namespace hhlink
