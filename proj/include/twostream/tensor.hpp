#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "twostream/error.hpp"

namespace twostream {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    out += ")";
    return out;
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

// Dense row-major tensor of 64-bit floats. The one value carrier shared by
// every module; quantized u8 data is held as integral doubles in [0, 255]
// and only becomes bytes at the file boundary.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

    Tensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_numel(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor full(Shape shape, double value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double& at(std::size_t c, std::size_t h, std::size_t w) {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }
    double at(std::size_t c, std::size_t h, std::size_t w) const {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }

    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    // Same data, new shape; element count must agree.
    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != data_.size()) {
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
        }
        return Tensor(std::move(s), data_);
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    static std::size_t checked_numel(const Shape& s) {
        for (std::size_t e : s) {
            if (e == 0) throw ShapeError("zero extent in shape " + shape_str(s));
        }
        return shape_numel(s);
    }

    Shape shape_;
    std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape " + shape_str(a.shape()) +
                         " does not match " + shape_str(b.shape()));
    }
}

// Contiguous slice [begin, begin+count) along the leading axis.
inline Tensor slice_leading(const Tensor& t, std::size_t begin, std::size_t count) {
    if (t.rank() == 0 || begin + count > t.extent(0)) {
        throw ShapeError("slice [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         shape_str(t.shape()));
    }
    Shape s = t.shape();
    s[0] = count;
    std::size_t inner = t.size() / t.extent(0);
    std::vector<double> data(t.data() + begin * inner, t.data() + (begin + count) * inner);
    return Tensor(std::move(s), std::move(data));
}

// Stack equally-shaped tensors along a new leading axis.
inline Tensor stack_leading(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("stack_leading: empty input");
    Shape s = parts[0].shape();
    for (const Tensor& p : parts) require_same_shape(parts[0], p, "stack_leading");
    Shape out_shape;
    out_shape.push_back(parts.size());
    out_shape.insert(out_shape.end(), s.begin(), s.end());
    Tensor out(out_shape);
    std::size_t inner = parts[0].size();
    for (std::size_t i = 0; i < parts.size(); ++i) {
        std::copy(parts[i].data(), parts[i].data() + inner, out.data() + i * inner);
    }
    return out;
}

// ---------------------------------------------------------------------------
// TSR1 file format, shared by all modules and bit-exact by contract:
//   magic "TSR1"
//   u32 little-endian rank
//   rank x u32 little-endian extents
//   u8 dtype tag: 0 = f64 little-endian, 1 = u8
//   raw row-major payload
// ---------------------------------------------------------------------------

enum class DType : std::uint8_t { f64 = 0, u8 = 1 };

namespace detail {

inline void put_u32_le(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f64_le(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

}  // namespace detail

inline std::string encode_tsr1(const Tensor& t, DType dtype = DType::f64) {
    std::string buf;
    buf.reserve(9 + 4 * t.rank() + t.size() * (dtype == DType::f64 ? 8 : 1));
    buf += "TSR1";
    if (t.rank() > 0xffffffffu) throw ValueError("tensor rank exceeds TSR1 limit");
    detail::put_u32_le(buf, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) {
        if (e > 0xffffffffu) throw ValueError("tensor extent exceeds TSR1 limit");
        detail::put_u32_le(buf, static_cast<std::uint32_t>(e));
    }
    buf.push_back(static_cast<char>(dtype));
    if (dtype == DType::f64) {
        for (std::size_t i = 0; i < t.size(); ++i) detail::put_f64_le(buf, t[i]);
    } else {
        for (std::size_t i = 0; i < t.size(); ++i) {
            double v = t[i];
            if (v < 0.0 || v > 255.0 || v != std::floor(v)) {
                throw ValueError("u8 payload requires integral values in [0, 255], got " +
                                 std::to_string(v));
            }
            buf.push_back(static_cast<char>(static_cast<unsigned char>(v)));
        }
    }
    return buf;
}

inline Tensor decode_tsr1(const std::string& buf, DType* dtype_out = nullptr) {
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    if (buf.size() < 9 || std::memcmp(p, "TSR1", 4) != 0) {
        throw IoError("not a TSR1 payload");
    }
    std::uint32_t rank = detail::get_u32_le(p + 4);
    std::size_t off = 8;
    if (buf.size() < off + 4ull * rank + 1) throw IoError("truncated TSR1 header");
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = detail::get_u32_le(p + off);
        numel *= shape[i];
        off += 4;
    }
    auto tag = static_cast<DType>(p[off++]);
    if (tag != DType::f64 && tag != DType::u8) throw IoError("unknown TSR1 dtype tag");
    std::size_t elem = tag == DType::f64 ? 8 : 1;
    if (buf.size() != off + numel * elem) {
        throw IoError("TSR1 payload size mismatch: expected " +
                      std::to_string(off + numel * elem) + " bytes, got " +
                      std::to_string(buf.size()));
    }
    std::vector<double> data(numel);
    if (tag == DType::f64) {
        for (std::size_t i = 0; i < numel; ++i) data[i] = detail::get_f64_le(p + off + 8 * i);
    } else {
        for (std::size_t i = 0; i < numel; ++i) data[i] = static_cast<double>(p[off + i]);
    }
    if (dtype_out) *dtype_out = tag;
    return Tensor(std::move(shape), std::move(data));
}

inline void write_tsr1(const std::filesystem::path& path, const Tensor& t,
                       DType dtype = DType::f64) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path.string());
    std::string buf = encode_tsr1(t, dtype);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

inline Tensor read_tsr1(const std::filesystem::path& path, DType* dtype_out = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_tsr1(buf, dtype_out);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

}  // namespace twostream
