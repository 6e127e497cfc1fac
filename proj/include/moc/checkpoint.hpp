#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "moc/common.hpp"
#include "moc/params.hpp"
#include "moc/predictors.hpp"

namespace moc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Optimizer and RNG state appended to a checkpoint so a run can resume at
// an epoch boundary and finish bit-identically to an uninterrupted run.
struct TrainerStateBlob {
  std::uint32_t epochs_done = 0;
  struct Moments {
    std::int64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Moments> optimizers;
  std::vector<std::string> rng_states;
};

struct Checkpoint {
  ModelDims dims;
  ParamSet params;
  std::optional<TrainerStateBlob> state;
};

namespace ckpt_detail {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void get(std::istream& is, T* v, const std::string& path) {
  is.read(reinterpret_cast<char*>(v), sizeof(T));
  require(static_cast<bool>(is), ErrorCategory::format, "truncated checkpoint " + path);
}

inline void put_doubles(std::ostream& os, const std::vector<double>& v) {
  put(os, static_cast<std::uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> get_doubles(std::istream& is, const std::string& path) {
  std::uint64_t n = 0;
  get(is, &n, path);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  require(static_cast<bool>(is), ErrorCategory::format, "truncated checkpoint " + path);
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put(os, static_cast<std::uint64_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const std::string& path) {
  std::uint64_t n = 0;
  get(is, &n, path);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  require(static_cast<bool>(is), ErrorCategory::format, "truncated checkpoint " + path);
  return s;
}

}  // namespace ckpt_detail

// Binary layout: magic "MOCK", u32 version, eight u32 dims, u64 count,
// count f64 parameter values (flat view), u8 state flag, optional state.
inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorCategory::io, "cannot write checkpoint " + path.string());
  os.write("MOCK", 4);
  ckpt_detail::put(os, kCheckpointVersion);
  const ModelDims& d = ckpt.dims;
  for (int v : {d.d_p, d.d_g, d.attn_dim, d.path_h1, d.path_h2, d.gene_h1, d.gene_h2,
                static_cast<int>(d.path_act)}) {
    ckpt_detail::put(os, static_cast<std::uint32_t>(v));
  }
  ckpt_detail::put_doubles(os, ckpt.params.flat_view());
  ckpt_detail::put(os, static_cast<std::uint8_t>(ckpt.state.has_value() ? 1 : 0));
  if (ckpt.state) {
    const TrainerStateBlob& st = *ckpt.state;
    ckpt_detail::put(os, st.epochs_done);
    ckpt_detail::put(os, static_cast<std::uint32_t>(st.optimizers.size()));
    for (const auto& opt : st.optimizers) {
      ckpt_detail::put(os, opt.step);
      ckpt_detail::put_doubles(os, opt.m);
      ckpt_detail::put_doubles(os, opt.v);
    }
    ckpt_detail::put(os, static_cast<std::uint32_t>(st.rng_states.size()));
    for (const std::string& s : st.rng_states) ckpt_detail::put_string(os, s);
  }
  require(os.good(), ErrorCategory::io, "write failed for checkpoint " + path.string());

  // Human-readable dimension sidecar.
  nlohmann::json meta{
      {"d_p", d.d_p},           {"d_g", d.d_g},           {"attn_dim", d.attn_dim},
      {"path_hidden", nlohmann::json::array({d.path_h1, d.path_h2})},
      {"gene_hidden", nlohmann::json::array({d.gene_h1, d.gene_h2})},
      {"path_act", to_string(d.path_act)},
      {"parameters", ckpt.params.flat_size()},
  };
  std::ofstream ms(path.string() + ".meta.json");
  if (ms.good()) ms << meta.dump(2) << '\n';
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorCategory::io, "cannot open checkpoint " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, "MOCK", 4) == 0, ErrorCategory::format,
          "bad magic in checkpoint " + path.string());
  std::uint32_t version = 0;
  ckpt_detail::get(is, &version, path.string());
  require(version == kCheckpointVersion, ErrorCategory::format,
          "unsupported checkpoint version " + std::to_string(version) + " in " + path.string());

  std::uint32_t raw[8] = {};
  for (auto& v : raw) ckpt_detail::get(is, &v, path.string());
  Checkpoint ckpt;
  ckpt.dims.d_p = static_cast<int>(raw[0]);
  ckpt.dims.d_g = static_cast<int>(raw[1]);
  ckpt.dims.attn_dim = static_cast<int>(raw[2]);
  ckpt.dims.path_h1 = static_cast<int>(raw[3]);
  ckpt.dims.path_h2 = static_cast<int>(raw[4]);
  ckpt.dims.gene_h1 = static_cast<int>(raw[5]);
  ckpt.dims.gene_h2 = static_cast<int>(raw[6]);
  require(raw[7] <= 2, ErrorCategory::format, "bad activation code in " + path.string());
  ckpt.dims.path_act = static_cast<HiddenAct>(raw[7]);

  ckpt.params = param_layout(ckpt.dims);
  const std::vector<double> flat = ckpt_detail::get_doubles(is, path.string());
  require(flat.size() == ckpt.params.flat_size(), ErrorCategory::format,
          "parameter count mismatch in " + path.string() + ": expected " +
              std::to_string(ckpt.params.flat_size()) + ", got " + std::to_string(flat.size()));
  ckpt.params.set_flat(flat);

  std::uint8_t has_state = 0;
  ckpt_detail::get(is, &has_state, path.string());
  if (has_state) {
    TrainerStateBlob st;
    ckpt_detail::get(is, &st.epochs_done, path.string());
    std::uint32_t n_opt = 0;
    ckpt_detail::get(is, &n_opt, path.string());
    for (std::uint32_t i = 0; i < n_opt; ++i) {
      TrainerStateBlob::Moments mo;
      ckpt_detail::get(is, &mo.step, path.string());
      mo.m = ckpt_detail::get_doubles(is, path.string());
      mo.v = ckpt_detail::get_doubles(is, path.string());
      st.optimizers.push_back(std::move(mo));
    }
    std::uint32_t n_rng = 0;
    ckpt_detail::get(is, &n_rng, path.string());
    for (std::uint32_t i = 0; i < n_rng; ++i) {
      st.rng_states.push_back(ckpt_detail::get_string(is, path.string()));
    }
    ckpt.state = std::move(st);
  }
  return ckpt;
}

}  // namespace moc
