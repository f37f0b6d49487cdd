// Copyright 2026 The dsmt Authors
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
//
// Checkpoint file format (little-endian):
//   magic "DSQC" | version u8 = 1 | config_json_len u32 | config JSON bytes
//   | n_tensors u32 | per tensor: name_len u16, name bytes, dtype u8 (0 =
//   float32), flags u8 (bit0 = frozen), rows u32, cols u32, row-major
//   float32 payload.
// Writes go to a temp file in the same directory followed by a rename.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dsmt/feature_io.hpp"
#include "dsmt/model.hpp"

namespace dsmt {

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"model_type", model_type_name(c.model_type)},
                        {"d_model", c.d_model},
                        {"d_ff", c.d_ff},
                        {"n_heads", c.n_heads},
                        {"n_enc_layers", c.n_enc_layers},
                        {"tap_layer", c.tap_layer},
                        {"n_dec_layers", c.n_dec_layers},
                        {"dropout", c.dropout},
                        {"lambdas", c.lambdas},
                        {"time_mask_spans", c.time_mask_spans},
                        {"time_mask_max_width", c.time_mask_max_width},
                        {"post_encoder_downsample", c.post_encoder_downsample},
                        {"label_smoothing", c.label_smoothing},
                        {"vocab_cross", c.vocab_cross},
                        {"vocab_src", c.vocab_src},
                        {"vocab_tgt", c.vocab_tgt}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.model_type = model_type_from_name(j.at("model_type").get<std::string>());
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_enc_layers = j.at("n_enc_layers").get<int>();
  c.tap_layer = j.at("tap_layer").get<int>();
  c.n_dec_layers = j.at("n_dec_layers").get<int>();
  c.dropout = j.at("dropout").get<double>();
  auto l = j.at("lambdas");
  c.lambdas = {l.at(0).get<double>(), l.at(1).get<double>(), l.at(2).get<double>()};
  c.time_mask_spans = j.at("time_mask_spans").get<int>();
  c.time_mask_max_width = j.at("time_mask_max_width").get<int>();
  c.post_encoder_downsample = j.at("post_encoder_downsample").get<int>();
  c.label_smoothing = j.at("label_smoothing").get<double>();
  c.vocab_cross = j.at("vocab_cross").get<int>();
  c.vocab_src = j.at("vocab_src").get<int>();
  c.vocab_tgt = j.at("vocab_tgt").get<int>();
  return c;
}

struct Checkpoint {
  ModelConfig config;
  Parameters<float> params;
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + tmp.string());
    os.write("DSQC", 4);
    os.put(char(1));
    std::string cfg = model_config_to_json(ckpt.config).dump();
    detail::write_u32(os, std::uint32_t(cfg.size()));
    os.write(cfg.data(), std::streamsize(cfg.size()));
    detail::write_u32(os, std::uint32_t(ckpt.params.entries.size()));
    for (const auto& e : ckpt.params.entries) {
      std::uint16_t nlen = std::uint16_t(e.name.size());
      os.put(char(nlen & 0xff));
      os.put(char(nlen >> 8));
      os.write(e.name.data(), nlen);
      os.put(char(0));  // dtype float32
      os.put(char(e.frozen ? 1 : 0));
      detail::write_u32(os, std::uint32_t(e.value.rows));
      detail::write_u32(os, std::uint32_t(e.value.cols));
      os.write(reinterpret_cast<const char*>(e.value.data.data()),
               std::streamsize(e.value.size() * sizeof(float)));
    }
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "DSQC", 4) != 0) throw FormatError("bad checkpoint magic");
  if (is.get() != 1) throw FormatError("unsupported checkpoint version");
  std::uint32_t clen = detail::read_u32(is);
  std::string cfg(clen, '\0');
  is.read(cfg.data(), clen);
  Checkpoint ckpt;
  ckpt.config = model_config_from_json(nlohmann::json::parse(cfg));
  std::uint32_t n = detail::read_u32(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    int lo = is.get(), hi = is.get();
    if (lo < 0 || hi < 0) throw TruncationError("checkpoint truncated");
    std::string name(std::size_t(lo | (hi << 8)), '\0');
    is.read(name.data(), std::streamsize(name.size()));
    int dtype = is.get();
    int flags = is.get();
    if (dtype != 0) throw FormatError("unsupported tensor dtype");
    std::uint32_t rows = detail::read_u32(is);
    std::uint32_t cols = detail::read_u32(is);
    Mat<float> m(static_cast<int>(rows), static_cast<int>(cols));
    is.read(reinterpret_cast<char*>(m.data.data()), std::streamsize(m.size() * sizeof(float)));
    if (!is) throw TruncationError("checkpoint tensor payload truncated");
    ckpt.params.add(name, std::move(m));
    ckpt.params.set_frozen(name, (flags & 1) != 0);
  }
  return ckpt;
}

}  // namespace dsmt
