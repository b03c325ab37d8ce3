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

#ifndef SEPA_CHECKPOINT_HPP
#define SEPA_CHECKPOINT_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sepa/tensor.hpp"

namespace sepa::checkpoint {

// Versioned binary container: magic, format version, a key=value config
// echo, the vocabulary, and every named tensor with its shape and raw
// 64-bit values. Integers and doubles are written in the host's native
// byte order (the artifact targets a single machine, not interchange).
inline constexpr char kMagic[8] = {'S', 'E', 'P', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

struct Snapshot {
  std::map<std::string, std::string> config;  // echo of the run config
  std::vector<std::string> vocab;             // token strings, id order
  std::vector<std::pair<std::string, std::vector<std::size_t>>> shapes;
  std::map<std::string, std::vector<double>> values;
};

// Writes config echo, vocabulary, and the given tensors under their names.
void save(const std::string& path,
          const std::map<std::string, std::string>& config,
          const std::vector<std::string>& vocab,
          const std::vector<std::pair<std::string, Tensor>>& tensors);

// Reads the whole container; any structural problem (magic, version,
// truncation) is a data error.
Snapshot read(const std::string& path);

// Copies values from the snapshot into the given tensors, matching by name.
// A missing name, a leftover unknown name, or a shape mismatch is a data
// error that names the offending tensor.
void restore(const Snapshot& snap,
             const std::vector<std::pair<std::string, Tensor>>& tensors);

}  // namespace sepa::checkpoint

#endif  // SEPA_CHECKPOINT_HPP
