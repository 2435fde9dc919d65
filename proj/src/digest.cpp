#include "polardial/digest.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

#include "polardial/error.hpp"

namespace polardial {
namespace {

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

std::string to_hex(const unsigned char* data, unsigned int len) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[data[i] >> 4]);
    out.push_back(kHex[data[i] & 0xF]);
  }
  return out;
}

MdCtx new_sha256() {
  MdCtx ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest initialization failed");
  }
  return ctx;
}

std::string finish(EVP_MD_CTX* ctx) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx, md.data(), &len) != 1) throw Error("sha256: finalize failed");
  return to_hex(md.data(), len);
}

nlohmann::json canonicalize(const nlohmann::json& value) {
  switch (value.type()) {
    case nlohmann::json::value_t::string:
      return collapse_whitespace(value.get_ref<const std::string&>());
    case nlohmann::json::value_t::array: {
      auto out = nlohmann::json::array();
      for (const auto& v : value) out.push_back(canonicalize(v));
      return out;
    }
    case nlohmann::json::value_t::object: {
      // nlohmann::json objects are std::map backed, so keys come out sorted.
      auto out = nlohmann::json::object();
      for (const auto& [k, v] : value.items()) out[k] = canonicalize(v);
      return out;
    }
    default:
      return value;
  }
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  auto ctx = new_sha256();
  EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size());
  return finish(ctx.get());
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("sha256: cannot open " + path.string());
  auto ctx = new_sha256();
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return finish(ctx.get());
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string canonical_json(const nlohmann::json& value) { return canonicalize(value).dump(); }

}  // namespace polardial
