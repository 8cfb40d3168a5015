#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "rem/common/error.hpp"

namespace rem::io {

static_assert(std::endian::native == std::endian::little,
              "binary containers assume a little-endian host");

template <class T>
void write_pod(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
void write_array(std::ostream& os, const std::vector<T>& values) {
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size() * sizeof(T)));
}

template <class T>
T read_pod(std::istream& is) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw ContractError("binary read: truncated input");
  }
  return value;
}

template <class T>
std::vector<T> read_array(std::istream& is, std::size_t count) {
  std::vector<T> values(count);
  if (!is.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(count * sizeof(T)))) {
    throw ContractError("binary read: truncated input");
  }
  return values;
}

inline void expect_magic(std::istream& is, const char (&magic)[8], const std::string& what) {
  char buf[8];
  if (!is.read(buf, 8) || std::string(buf, 8) != std::string(magic, 8)) {
    throw ContractError(what + ": bad magic");
  }
}

}  // namespace rem::io
