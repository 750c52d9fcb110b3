#include "krfws/serialize.hpp"

#include <bit>
#include <cstring>

namespace krfws {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary codecs assume a little-endian host");

template <typename T>
void write_raw(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("unexpected end of binary stream");
    return v;
}

}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) { write_raw(out, v); }
void write_u32(std::ostream& out, std::uint32_t v) { write_raw(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_raw(out, v); }
void write_i32(std::ostream& out, std::int32_t v) { write_raw(out, v); }

void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    write_raw(out, bits);
}

void write_vec(std::ostream& out, const Eigen::VectorXd& v) {
    write_u32(out, static_cast<std::uint32_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) write_f64(out, v[i]);
}

void write_mat(std::ostream& out, const Eigen::MatrixXd& m) {
    write_u32(out, static_cast<std::uint32_t>(m.rows()));
    write_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) write_f64(out, m(r, c));
}

std::uint8_t read_u8(std::istream& in) { return read_raw<std::uint8_t>(in); }
std::uint32_t read_u32(std::istream& in) { return read_raw<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_raw<std::uint64_t>(in); }
std::int32_t read_i32(std::istream& in) { return read_raw<std::int32_t>(in); }

double read_f64(std::istream& in) {
    const std::uint64_t bits = read_raw<std::uint64_t>(in);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

Eigen::VectorXd read_vec(std::istream& in) {
    const std::uint32_t n = read_u32(in);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (std::uint32_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = read_f64(in);
    return v;
}

Eigen::MatrixXd read_mat(std::istream& in) {
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::uint32_t c = 0; c < cols; ++c)
        for (std::uint32_t r = 0; r < rows; ++r)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = read_f64(in);
    return m;
}

void expect_magic(std::istream& in, const char* magic, const char* what) {
    const std::size_t len = std::strlen(magic);
    std::string got(len, '\0');
    in.read(got.data(), static_cast<std::streamsize>(len));
    if (!in || got != magic)
        throw DataError(std::string(what) + ": bad magic, expected '" + magic + "'");
}

}  // namespace krfws
