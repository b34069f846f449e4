#include "provmark/core/npy.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace provmark {

namespace {

std::string shape_tuple(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) out += std::to_string(s[i]) + ", ";
    if (s.size() > 1) out.resize(out.size() - 2);  // keep trailing comma for 1-tuples
    out += ")";
    return out;
}

void write_header(std::ofstream& f, const std::string& descr, const Shape& shape) {
    std::string dict = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " +
                       shape_tuple(shape) + ", }";
    size_t total = 10 + dict.size() + 1;
    size_t pad = (64 - total % 64) % 64;
    dict += std::string(pad, ' ');
    dict += '\n';
    uint16_t hlen = static_cast<uint16_t>(dict.size());
    f.write("\x93NUMPY\x01\x00", 8);
    f.write(reinterpret_cast<const char*>(&hlen), 2);
    f.write(dict.data(), static_cast<std::streamsize>(dict.size()));
}

}  // namespace

void npy_write(const std::string& path, const Tensor<float>& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("npy_write: cannot open " + path);
    write_header(f, "<f4", t.shape());
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.numel())));
    if (!f) throw std::runtime_error("npy_write: write failed for " + path);
}

void npy_write_u8(const std::string& path, const std::vector<uint8_t>& data, const Shape& shape) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
        throw std::invalid_argument("npy_write_u8: data size does not match shape");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("npy_write: cannot open " + path);
    write_header(f, "|u1", shape);
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!f) throw std::runtime_error("npy_write: write failed for " + path);
}

NpyArray npy_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("npy_read: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "\x93NUMPY", 6) != 0)
        throw std::runtime_error("npy_read: " + path + " is not an NPY file");
    uint8_t ver_major = static_cast<uint8_t>(magic[6]);
    uint32_t hlen = 0;
    if (ver_major == 1) {
        uint16_t h16 = 0;
        f.read(reinterpret_cast<char*>(&h16), 2);
        hlen = h16;
    } else {
        f.read(reinterpret_cast<char*>(&hlen), 4);
    }
    std::string header(hlen, '\0');
    f.read(header.data(), hlen);
    if (!f) throw std::runtime_error("npy_read: truncated header in " + path);

    if (header.find("'fortran_order': False") == std::string::npos)
        throw std::runtime_error("npy_read: only C-order arrays supported: " + path);

    NpyArray out;
    auto dp = header.find("'descr':");
    auto q1 = header.find('\'', dp + 8);
    auto q2 = header.find('\'', q1 + 1);
    std::string descr = header.substr(q1 + 1, q2 - q1 - 1);
    if (descr == "<f4" || descr == "|f4") out.dtype = "f4";
    else if (descr == "<f8") out.dtype = "f8";
    else if (descr == "|u1" || descr == "<u1") out.dtype = "u1";
    else throw std::runtime_error("npy_read: unsupported dtype " + descr + " in " + path);

    auto sp = header.find("'shape':");
    auto p1 = header.find('(', sp);
    auto p2 = header.find(')', p1);
    std::string tup = header.substr(p1 + 1, p2 - p1 - 1);
    int64_t v = 0;
    bool in_num = false;
    for (char c : tup) {
        if (c >= '0' && c <= '9') {
            v = v * 10 + (c - '0');
            in_num = true;
        } else if (in_num) {
            out.shape.push_back(v);
            v = 0;
            in_num = false;
        }
    }
    if (in_num) out.shape.push_back(v);

    int64_t n = shape_numel(out.shape);
    if (out.dtype == "u1") {
        out.u8.resize(static_cast<size_t>(n));
        f.read(reinterpret_cast<char*>(out.u8.data()), n);
    } else if (out.dtype == "f4") {
        out.f32.resize(static_cast<size_t>(n));
        f.read(reinterpret_cast<char*>(out.f32.data()), n * 4);
    } else {
        std::vector<double> tmp(static_cast<size_t>(n));
        f.read(reinterpret_cast<char*>(tmp.data()), n * 8);
        out.f32.assign(tmp.begin(), tmp.end());
        out.dtype = "f4";
    }
    if (!f) throw std::runtime_error("npy_read: truncated data in " + path);
    return out;
}

}  // namespace provmark
