#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "krfws/common.hpp"

namespace krfws {

// Little-endian binary primitives shared by every model container. Doubles
// are written as raw IEEE-754 bit patterns so round-trips are bit-exact.

void write_u8(std::ostream& out, std::uint8_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_i32(std::ostream& out, std::int32_t v);
void write_f64(std::ostream& out, double v);
void write_vec(std::ostream& out, const Eigen::VectorXd& v);
void write_mat(std::ostream& out, const Eigen::MatrixXd& m);

std::uint8_t read_u8(std::istream& in);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
std::int32_t read_i32(std::istream& in);
double read_f64(std::istream& in);
Eigen::VectorXd read_vec(std::istream& in);
Eigen::MatrixXd read_mat(std::istream& in);

/// Reads exactly `magic`, else throws DataError mentioning `what`.
void expect_magic(std::istream& in, const char* magic, const char* what);

}  // namespace krfws
