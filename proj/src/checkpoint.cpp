// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sepa/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "sepa/error.hpp"

namespace sepa::checkpoint {

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_u64(std::istream& in, const std::string& what) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw DataError("checkpoint truncated while reading " + what);
  }
  return v;
}

std::string get_string(std::istream& in, const std::string& what) {
  const std::uint64_t len = get_u64(in, what + " length");
  if (len > (1ull << 32)) {
    throw DataError("implausible " + what + " length in checkpoint");
  }
  std::string s(len, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(len))) {
    throw DataError("checkpoint truncated while reading " + what);
  }
  return s;
}

std::string shape_text(const std::vector<std::size_t>& shape) {
  if (shape.empty()) return "scalar";
  std::ostringstream out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  return out.str();
}

}  // namespace

void save(const std::string& path,
          const std::map<std::string, std::string>& config,
          const std::vector<std::string>& vocab,
          const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot write checkpoint file " + path);
  }
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  put_u64(out, config.size());
  for (const auto& [key, value] : config) {
    put_string(out, key);
    put_string(out, value);
  }
  put_u64(out, vocab.size());
  for (const std::string& token : vocab) put_string(out, token);
  put_u64(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_string(out, name);
    put_u64(out, t.shape().size());
    for (std::size_t dim : t.shape()) put_u64(out, dim);
    put_u64(out, t.size());
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) {
    throw DataError("write failure on checkpoint file " + path);
  }
}

Snapshot read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot read checkpoint file " + path);
  }
  char magic[sizeof(kMagic)] = {};
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path + " is not a checkpoint file (bad magic)");
  }
  std::uint32_t version = 0;
  if (!in.read(reinterpret_cast<char*>(&version), sizeof(version)) ||
      version != kVersion) {
    throw DataError("unsupported checkpoint version " +
                    std::to_string(version) + " in " + path);
  }
  Snapshot snap;
  const std::uint64_t n_config = get_u64(in, "config count");
  for (std::uint64_t i = 0; i < n_config; ++i) {
    std::string key = get_string(in, "config key");
    snap.config[key] = get_string(in, "config value");
  }
  const std::uint64_t n_vocab = get_u64(in, "vocabulary count");
  for (std::uint64_t i = 0; i < n_vocab; ++i) {
    snap.vocab.push_back(get_string(in, "vocabulary token"));
  }
  const std::uint64_t n_tensors = get_u64(in, "tensor count");
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = get_string(in, "tensor name");
    const std::uint64_t rank = get_u64(in, "tensor rank");
    if (rank > 8) {
      throw DataError("implausible rank for tensor '" + name + "'");
    }
    std::vector<std::size_t> shape(rank);
    std::size_t expect = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<std::size_t>(get_u64(in, "tensor dimension"));
      expect *= shape[d];
    }
    const std::uint64_t count = get_u64(in, "tensor element count");
    if (count != expect) {
      throw DataError("element count disagrees with shape for tensor '" +
                      name + "'");
    }
    std::vector<double> data(count);
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(count * sizeof(double)))) {
      throw DataError("checkpoint truncated inside tensor '" + name + "'");
    }
    snap.shapes.emplace_back(name, std::move(shape));
    snap.values[name] = std::move(data);
  }
  return snap;
}

void restore(const Snapshot& snap,
             const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::set<std::string> consumed;
  for (const auto& [name, t] : tensors) {
    const auto it = snap.values.find(name);
    if (it == snap.values.end()) {
      throw DataError("checkpoint is missing tensor '" + name + "'");
    }
    std::vector<std::size_t> stored;
    for (const auto& [sname, sshape] : snap.shapes) {
      if (sname == name) {
        stored = sshape;
        break;
      }
    }
    if (stored != t.shape()) {
      throw DataError("shape mismatch for tensor '" + name +
                      "': checkpoint has " + shape_text(stored) +
                      ", model wants " + shape_text(t.shape()));
    }
    Tensor target = t;
    target.mutable_data() = it->second;
    consumed.insert(name);
  }
  for (const auto& [name, shape] : snap.shapes) {
    if (!consumed.count(name)) {
      throw DataError("checkpoint carries unknown tensor '" + name + "'");
    }
  }
}

}  // namespace sepa::checkpoint
