#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fedmerge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input that violates a documented precondition.
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// File could not be opened, read, written, or failed its integrity check.
class IoError : public Error {
  public:
    using Error::Error;
};

/// Unknown option value or malformed configuration entry.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Malformed line in a line-oriented input file.
class ParseError : public Error {
  public:
    ParseError(std::string path, std::size_t line, const std::string& what)
        : Error(path + ":" + std::to_string(line) + ": " + what), path_(std::move(path)), line_(line)
    {}

    const std::string& path() const noexcept { return path_; }
    std::size_t line() const noexcept { return line_; }

  private:
    std::string path_;
    std::size_t line_;
};

// FNV-1a, used for stable seeds and cache keys. std::hash is not stable
// across standard library implementations.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent RNG seed from a master seed and a key path.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view a)
{
    return splitmix64(master ^ fnv1a(a));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view a, std::string_view b)
{
    return splitmix64(derive_seed(master, a) ^ fnv1a(b, 0x84222325cbf29ce4ULL));
}

}  // namespace fedmerge
