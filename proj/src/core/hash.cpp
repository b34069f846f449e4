#include "provmark/core/hash.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <stdexcept>

namespace provmark {

Sha256::Sha256() {
    EVP_MD_CTX* c = EVP_MD_CTX_new();
    if (!c || EVP_DigestInit_ex(c, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: init failed");
    ctx_ = c;
}

Sha256::~Sha256() {
    if (ctx_) EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_));
}

void Sha256::update(const void* data, size_t len) {
    if (EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data, len) != 1)
        throw std::runtime_error("sha256: update failed");
}

std::string Sha256::hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), digest, &len) != 1)
        throw std::runtime_error("sha256: final failed");
    static const char* k = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(k[digest[i] >> 4]);
        out.push_back(k[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(const void* data, size_t len) {
    Sha256 h;
    h.update(data, len);
    return h.hex();
}

std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

std::string sha256_file_hex(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("sha256: cannot open " + path);
    Sha256 h;
    char buf[1 << 16];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0) h.update(buf, static_cast<size_t>(f.gcount()));
    return h.hex();
}

}  // namespace provmark
