#include "spe/util.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "spe/errors.hpp"

namespace spe {

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Fnv1a h;
  h.update(bytes);
  return h.hex();
}

}  // namespace spe
