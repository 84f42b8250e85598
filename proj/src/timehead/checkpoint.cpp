// SPDX-License-Identifier: Apache-2.0
#include "tahead/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tahead/errors.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace tahead {

using nlohmann::json;

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from_string(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw ContractViolation("unknown precision '" + s + "'");
}

void round_to_f32(Tensor& t) {
  for (auto& v : t.storage()) v = static_cast<double>(static_cast<float>(v));
}

CheckpointPaths checkpoint_paths(const std::filesystem::path& base) {
  return {std::filesystem::path(base.string() + ".manifest.json"), std::filesystem::path(base.string() + ".bin")};
}

void checkpoint_save(const std::filesystem::path& base, const std::vector<const Parameter*>& params,
                     Precision dtype) {
  const auto paths = checkpoint_paths(base);
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());

  std::set<std::string> seen;
  json entries = json::array();
  std::string payload;
  for (const auto* p : params) {
    if (!seen.insert(p->name).second) throw CheckpointError("duplicate parameter name '" + p->name + "'");
    const std::uint64_t offset = payload.size();
    if (dtype == Precision::f64) {
      payload.append(reinterpret_cast<const char*>(p->value.data().data()), p->value.numel() * sizeof(double));
    } else {
      for (double v : p->value.data()) {
        const float f = static_cast<float>(v);
        payload.append(reinterpret_cast<const char*>(&f), sizeof(float));
      }
    }
    entries.push_back({{"name", p->name},
                       {"shape", p->value.shape()},
                       {"dtype", to_string(dtype)},
                       {"offset", offset},
                       {"nbytes", payload.size() - offset}});
  }
  json manifest = {{"format", "tahead-checkpoint"},
                   {"version", kCheckpointVersion},
                   {"payload", paths.payload.filename().string()},
                   {"payload_bytes", payload.size()},
                   {"params", entries}};

  std::ofstream bin(paths.payload, std::ios::binary | std::ios::trunc);
  if (!bin) throw CheckpointError("cannot write " + paths.payload.string());
  bin.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  std::ofstream man(paths.manifest, std::ios::trunc);
  if (!man) throw CheckpointError("cannot write " + paths.manifest.string());
  man << manifest.dump(2) << '\n';
}

namespace {

std::vector<CheckpointEntry> read_manifest(const std::filesystem::path& path, std::uint64_t& payload_bytes) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot read " + path.string());
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw CheckpointError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (m.value("format", "") != "tahead-checkpoint") throw CheckpointError("not a checkpoint manifest: " + path.string());
  const int version = m.value("version", -1);
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  payload_bytes = m.at("payload_bytes").get<std::uint64_t>();
  std::vector<CheckpointEntry> out;
  for (const auto& e : m.at("params")) {
    CheckpointEntry ce;
    ce.name = e.at("name").get<std::string>();
    ce.shape = e.at("shape").get<Shape>();
    ce.dtype = precision_from_string(e.at("dtype").get<std::string>());
    ce.offset = e.at("offset").get<std::uint64_t>();
    ce.nbytes = e.at("nbytes").get<std::uint64_t>();
    const std::uint64_t width = ce.dtype == Precision::f64 ? sizeof(double) : sizeof(float);
    if (ce.nbytes != shape_numel(ce.shape) * width)
      throw CheckpointError("manifest entry '" + ce.name + "' has inconsistent byte count");
    out.push_back(std::move(ce));
  }
  return out;
}

}  // namespace

std::map<std::string, Tensor> checkpoint_load(const std::filesystem::path& base) {
  const auto paths = checkpoint_paths(base);
  std::uint64_t payload_bytes = 0;
  const auto entries = read_manifest(paths.manifest, payload_bytes);

  std::ifstream bin(paths.payload, std::ios::binary);
  if (!bin) throw CheckpointError("cannot read " + paths.payload.string());
  std::string payload((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (payload.size() < payload_bytes)
    throw CheckpointTruncatedError("payload " + paths.payload.string() + " has " + std::to_string(payload.size()) +
                                   " bytes, manifest declares " + std::to_string(payload_bytes));
  if (payload.size() > payload_bytes) throw CheckpointError("payload longer than the manifest declares");

  std::map<std::string, Tensor> out;
  for (const auto& e : entries) {
    if (e.offset + e.nbytes > payload.size())
      throw CheckpointTruncatedError("tensor '" + e.name + "' extends past the end of the payload");
    Tensor t(e.shape);
    if (e.dtype == Precision::f64) {
      std::memcpy(t.data().data(), payload.data() + e.offset, e.nbytes);
    } else {
      for (std::size_t i = 0; i < t.numel(); ++i) {
        float f;
        std::memcpy(&f, payload.data() + e.offset + i * sizeof(float), sizeof(float));
        t[i] = f;
      }
    }
    if (!out.emplace(e.name, std::move(t)).second) throw CheckpointError("duplicate tensor '" + e.name + "'");
  }
  return out;
}

std::vector<std::string> checkpoint_load_into(const std::filesystem::path& base,
                                              const std::vector<Parameter*>& params, bool require_all) {
  auto tensors = checkpoint_load(base);
  std::ostringstream mismatch;
  std::vector<std::string> missing;
  for (const auto* p : params) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) {
      missing.push_back(p->name);
      continue;
    }
    if (it->second.shape() != p->value.shape())
      mismatch << "  " << p->name << ": checkpoint " << shape_str(it->second.shape()) << " vs model "
               << shape_str(p->value.shape()) << '\n';
  }
  if (!mismatch.str().empty()) throw CheckpointShapeError("incompatible checkpoint shapes:\n" + mismatch.str());
  if (require_all && !missing.empty()) throw CheckpointShapeError("checkpoint lacks parameter '" + missing[0] + "'");
  std::vector<std::string> loaded;
  for (auto* p : params) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) continue;
    p->value = it->second;
    loaded.push_back(p->name);
  }
  return loaded;
}

std::string checkpoint_digest(const std::filesystem::path& base) {
  std::ifstream bin(checkpoint_paths(base).payload, std::ios::binary);
  if (!bin) throw CheckpointError("cannot read payload for digest");
  std::uint64_t h = 1469598103934665603ULL;
  char c;
  while (bin.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace tahead
