#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace reorm {

// SHA-256 of a byte buffer, lowercase hex.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(const std::string& data);

std::string base64_encode(std::span<const std::uint8_t> data);
std::vector<std::uint8_t> base64_decode(const std::string& text);

std::string read_file(const std::string& path);
std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file(const std::string& path, const std::string& data);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> data);

// Uniform draw in [0, n) via rejection sampling. Unlike the std
// distributions, the result depends only on the engine state, so seeded
// sequences are reproducible across standard library implementations.
std::uint64_t bounded_uniform(std::mt19937_64& rng, std::uint64_t n);

// Uniform double in [0, 1) with 53 random bits.
double uniform_real(std::mt19937_64& rng);

std::string trim(const std::string& s);
std::string collapse_whitespace(const std::string& s);
std::string to_lower(const std::string& s);

// RFC 3339 UTC timestamp of the current wall clock.
std::string now_rfc3339();

} // namespace reorm
