// Copyright 2026 The partkd Authors
//
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

#pragma once

// Dataset serialization.
//
// Sequence payload (.skl): binary container
//   magic "SKL1"
//   u16   schema id length, followed by the schema id bytes
//   u32   C_in, T_raw, V, M_bodies
//   u8    quality (0 = high, 1 = low)
//   u32   label
//   f32[] coordinates, row-major (C_in, T_raw, V, M_bodies)
// All integers and floats are little-endian.
//
// Manifest (manifest.json): JSON index of per-instance records
// (id, label, quality, schema, payload file reference).
//
// Importing the native formats of external motion datasets is out of scope;
// for reference, an importer would fill the fields as follows:
//   NTU-RGB+D .skeleton : 25-joint 3D -> schema kinect25, (x,y,z) from
//       jointXYZ, bodies from bodyCount (capped at 2), label from the
//       action id in the file name.
//   Penn Action .mat    : 13-joint 2D -> schema penn13, (x,y) from x/y
//       arrays, confidence from the visibility flags.
//   SYSU 3D HOI         : 20-joint 3D -> schema kinect20, single body.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "partkd/common.hpp"
#include "partkd/graph.hpp"
#include "partkd/sequence.hpp"

namespace partkd {

namespace detail {

inline void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
  write_bytes(out, &v, sizeof(T));
}

inline void read_bytes(std::ifstream& in, void* p, std::size_t n, const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw MalformedRecord("payload '" + path + "': truncated file");
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  read_bytes(in, &v, sizeof(T), path);
  return v;
}

}  // namespace detail

inline void save_sequence(const SkeletonSequence& seq, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot open for writing: " + path);
  detail::write_bytes(out, "SKL1", 4);
  detail::write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(seq.schema_id.size()));
  detail::write_bytes(out, seq.schema_id.data(), seq.schema_id.size());
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(kInputChannels));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(seq.length));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(seq.V));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(seq.bodies));
  detail::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(seq.quality));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(seq.label));
  detail::write_bytes(out, seq.coords.data(), seq.coords.size() * sizeof(float));
  if (!out) throw IOError("write failure: " + path);
}

inline SkeletonSequence load_sequence(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingPayload("payload file not found: " + path);
  char magic[4];
  detail::read_bytes(in, magic, 4, path);
  if (std::memcmp(magic, "SKL1", 4) != 0)
    throw MalformedRecord("payload '" + path + "': bad magic");
  const auto id_len = detail::read_pod<std::uint16_t>(in, path);
  std::string schema_id(id_len, '\0');
  detail::read_bytes(in, schema_id.data(), id_len, path);
  SkeletonSequence seq;
  seq.schema_id = schema_id;
  const auto c_in = detail::read_pod<std::uint32_t>(in, path);
  if (c_in != static_cast<std::uint32_t>(kInputChannels))
    throw MalformedRecord("payload '" + path + "': unsupported channel count");
  seq.length = static_cast<int>(detail::read_pod<std::uint32_t>(in, path));
  seq.V = static_cast<int>(detail::read_pod<std::uint32_t>(in, path));
  seq.bodies = static_cast<int>(detail::read_pod<std::uint32_t>(in, path));
  seq.quality = static_cast<Quality>(detail::read_pod<std::uint8_t>(in, path));
  seq.label = static_cast<int>(detail::read_pod<std::uint32_t>(in, path));
  if (seq.length < 0 || seq.V <= 0 || (seq.bodies != 1 && seq.bodies != 2))
    throw MalformedRecord("payload '" + path + "': implausible header");
  seq.allocate();
  detail::read_bytes(in, seq.coords.data(), seq.coords.size() * sizeof(float), path);
  return seq;
}

namespace detail {

inline std::string payload_name(const SkeletonSequence& seq) {
  return seq.instance_id + (seq.quality == Quality::high ? "_high" : "_low") + ".skl";
}

}  // namespace detail

// Writes manifest.json plus one payload file per sequence under dir/payloads.
inline void save_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "payloads", ec);
  if (ec) throw IOError("cannot create output directory: " + dir);

  nlohmann::json manifest;
  manifest["format"] = "partkd-dataset";
  manifest["version"] = 1;
  manifest["num_actions"] = ds.num_actions;
  auto& records = manifest["records"] = nlohmann::json::array();

  auto emit = [&](const SkeletonSequence& seq) {
    const std::string rel = "payloads/" + detail::payload_name(seq);
    save_sequence(seq, (fs::path(dir) / rel).string());
    records.push_back({{"id", seq.instance_id},
                       {"label", seq.label},
                       {"quality", to_string(seq.quality)},
                       {"schema", seq.schema_id},
                       {"file", rel}});
  };
  for (const auto& p : ds.paired) {
    emit(p.high);
    emit(p.low);
  }
  for (const auto& s : ds.solitary) emit(s);

  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw IOError("cannot write manifest in: " + dir);
  out << manifest.dump(2) << '\n';
}

// Loads a dataset from its manifest, regrouping records into paired /
// solitary by instance id and re-validating every dataset invariant.
inline Dataset load_dataset(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw IOError("cannot open manifest: " + manifest_path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecord(std::string("manifest: ") + e.what());
  }

  Dataset ds;
  const fs::path base = fs::path(manifest_path).parent_path();
  std::map<std::string, std::vector<SkeletonSequence>> by_id;
  try {
    ds.num_actions = manifest.at("num_actions").get<int>();
    for (const auto& rec : manifest.at("records")) {
      const auto id = rec.at("id").get<std::string>();
      const auto label = rec.at("label").get<int>();
      const auto quality = rec.at("quality").get<std::string>();
      const auto schema = rec.at("schema").get<std::string>();
      const auto file = rec.at("file").get<std::string>();
      if (quality != "high" && quality != "low")
        throw MalformedRecord("manifest record '" + id + "': bad quality tag");
      if (label < 0 || label >= ds.num_actions)
        throw ValidationError("manifest record '" + id + "': label out of range");

      SkeletonSequence seq = load_sequence((base / file).string());
      seq.instance_id = id;
      if (seq.schema_id != schema)
        throw SchemaMismatch("record '" + id + "': manifest schema '" + schema +
                             "' != payload schema '" + seq.schema_id + "'");
      const SkeletonGraph g = build_graph(seq.schema_id);  // UnknownSchema on failure
      if (seq.V != g.V)
        throw SchemaMismatch("record '" + id + "': payload joint count " +
                             std::to_string(seq.V) + " != schema V " + std::to_string(g.V));
      if (seq.label != label)
        throw MalformedRecord("record '" + id + "': manifest label != payload label");
      if (to_string(seq.quality) != quality)
        throw MalformedRecord("record '" + id + "': manifest quality != payload quality");
      seq.validate();
      by_id[id].push_back(std::move(seq));
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecord(std::string("manifest: ") + e.what());
  }

  for (auto& [id, seqs] : by_id) {
    if (seqs.size() == 1) {
      if (seqs[0].quality != Quality::low)
        throw ValidationError("instance '" + id + "': unpaired high-quality record");
      ds.solitary.push_back(std::move(seqs[0]));
    } else if (seqs.size() == 2) {
      Dataset::Pair pair;
      for (auto& s : seqs) {
        if (s.quality == Quality::high)
          pair.high = std::move(s);
        else
          pair.low = std::move(s);
      }
      if (pair.high.instance_id != id || pair.low.instance_id != id)
        throw ValidationError("instance '" + id + "': records must be one high + one low");
      ds.paired.push_back(std::move(pair));
    } else {
      throw ValidationError("instance '" + id + "': more than two records");
    }
  }
  ds.validate();
  return ds;
}

}  // namespace partkd
