// SPDX-License-Identifier: Apache-2.0
#include "lexkit/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace lexkit::nn {

using nlohmann::json;

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

namespace {

void put_f32_le(std::string& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

float get_f32_le(const unsigned char* p) {
  std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                    (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<const Parameter*>& params,
                     const std::map<std::string, std::string>& meta) {
  json header;
  header["format"] = "lexkit-checkpoint-v1";
  header["meta"] = meta;
  json plist = json::array();
  std::string data;
  std::int64_t offset = 0;
  for (const Parameter* p : params) {
    json entry;
    entry["name"] = p->name;
    entry["shape"] = p->value.shape();
    entry["offset"] = offset;
    plist.push_back(entry);
    for (std::int64_t i = 0; i < p->value.size(); ++i)
      put_f32_le(data, static_cast<float>(p->value[i]));
    offset += p->value.size() * 4;
  }
  header["params"] = plist;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << header.dump() << "\n";
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("short write to checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) throw std::runtime_error("checkpoint " + path + " has no header");
  json header = json::parse(header_line);
  if (header.value("format", "") != "lexkit-checkpoint-v1")
    throw std::runtime_error("checkpoint " + path + " has unknown format");

  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint ckpt;
  if (header.contains("meta"))
    for (auto& [k, v] : header["meta"].items()) ckpt.meta[k] = v.get<std::string>();

  for (const auto& entry : header["params"]) {
    std::string name = entry["name"].get<std::string>();
    std::vector<std::int64_t> shape = entry["shape"].get<std::vector<std::int64_t>>();
    std::int64_t offset = entry["offset"].get<std::int64_t>();
    std::int64_t count = shape_product(shape);
    if (offset < 0 || offset + count * 4 > static_cast<std::int64_t>(data.size()))
      throw std::runtime_error("checkpoint " + path + ": tensor " + name + " extends past end of data");
    Tensor t(shape);
    const unsigned char* base = reinterpret_cast<const unsigned char*>(data.data()) + offset;
    for (std::int64_t i = 0; i < count; ++i) t[i] = static_cast<double>(get_f32_le(base + i * 4));
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void load_into_params(const Checkpoint& ckpt, const std::vector<Parameter*>& params) {
  std::ostringstream problems;
  for (Parameter* p : params) {
    const Tensor* src = ckpt.find(p->name);
    if (!src) {
      problems << "  missing: " << p->name << " " << p->value.shape_str() << "\n";
      continue;
    }
    if (!src->same_shape(p->value)) {
      problems << "  shape mismatch: " << p->name << " checkpoint " << src->shape_str()
               << " vs model " << p->value.shape_str() << "\n";
      continue;
    }
  }
  std::string msg = problems.str();
  if (!msg.empty()) throw std::runtime_error("checkpoint/config mismatch:\n" + msg);
  for (Parameter* p : params) {
    p->value = *ckpt.find(p->name);
    p->grad = Tensor::zeros(p->value.shape());
  }
}

}  // namespace lexkit::nn
