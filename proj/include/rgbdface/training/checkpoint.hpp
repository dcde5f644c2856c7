#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rgbdface/checksum.hpp"
#include "rgbdface/depthgen/backbone.hpp"
#include "rgbdface/depthgen/generator.hpp"
#include "rgbdface/fusion/model.hpp"
#include "rgbdface/profile.hpp"

namespace rgbdface::training {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'R', 'G', 'B', 'D', 'F', 'R', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint32_t { Depthgen = 1, Fusion = 2 };

struct CheckpointHeader {
  CheckpointKind kind = CheckpointKind::Depthgen;
  Profile profile = Profile::Desk;
  int identity_count = 0;
  // fusion only
  fusion::ArcParams arc{};
  double lambda = 0.0;
  int head_in = 0;
  int head_out = 0;
};

// Stage-1 model pair; the generator and backbone are saved together.
struct DepthgenModel {
  depthgen::GeneratorState generator;
  depthgen::BackboneState backbone;

  DepthgenModel(const Geometry& geom, int identity_count, std::uint64_t seed)
      : generator(geom, seed), backbone(geom, identity_count, seed ^ 0x9e3779b97f4a7c15ULL) {}

  void visit(const nn::StateVisitor& v) {
    generator.visit(v);
    backbone.visit(v);
  }
};

namespace detail {

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    require<CheckpointError>(static_cast<bool>(out_), "cannot open checkpoint ", path, " for writing");
  }
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const nn::Tensor& t) {
    pod(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) pod(static_cast<std::int32_t>(d));
    out_.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  void finish(const std::string& path) {
    out_.flush();
    require<CheckpointError>(static_cast<bool>(out_), "write to checkpoint ", path, " failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    require<CheckpointError>(static_cast<bool>(in_), "cannot open checkpoint ", path);
  }
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    require<CheckpointError>(static_cast<bool>(in_), "checkpoint ", path_, " is truncated");
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    require<CheckpointError>(n < (1u << 20), "checkpoint ", path_, ": implausible string length ", n);
    std::string s(n, '\0');
    in_.read(s.data(), n);
    require<CheckpointError>(static_cast<bool>(in_), "checkpoint ", path_, " is truncated");
    return s;
  }
  nn::Tensor tensor() {
    const auto rank = pod<std::uint32_t>();
    require<CheckpointError>(rank <= 8, "checkpoint ", path_, ": implausible tensor rank ", rank);
    nn::Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = pod<std::int32_t>();
      require<CheckpointError>(d >= 0, "checkpoint ", path_, ": negative tensor dim");
      shape.push_back(d);
    }
    nn::Tensor t(shape);
    in_.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    require<CheckpointError>(static_cast<bool>(in_), "checkpoint ", path_, " is truncated");
    return t;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

inline void write_header(Writer& w, const CheckpointHeader& h) {
  for (char c : kCheckpointMagic) w.pod(c);
  w.pod(kCheckpointVersion);
  w.pod(static_cast<std::uint32_t>(h.kind));
  w.str(std::string(to_string(h.profile)));
  w.pod(static_cast<std::int32_t>(h.identity_count));
  if (h.kind == CheckpointKind::Fusion) {
    w.pod(h.arc.scale);
    w.pod(h.arc.margin);
    w.pod(h.lambda);
    w.pod(static_cast<std::int32_t>(h.head_in));
    w.pod(static_cast<std::int32_t>(h.head_out));
  }
}

inline CheckpointHeader read_header(Reader& r) {
  char magic[8];
  for (char& c : magic) c = r.pod<char>();
  require<CheckpointError>(std::memcmp(magic, kCheckpointMagic, 8) == 0, r.path(), " is not a checkpoint file");
  const auto version = r.pod<std::uint32_t>();
  require<CheckpointError>(version == kCheckpointVersion, "checkpoint ", r.path(), " has schema version ",
                           version, ", expected ", kCheckpointVersion);
  CheckpointHeader h;
  const auto kind = r.pod<std::uint32_t>();
  require<CheckpointError>(kind == 1 || kind == 2, "checkpoint ", r.path(), ": unknown kind ", kind);
  h.kind = static_cast<CheckpointKind>(kind);
  const std::string prof = r.str();
  const auto p = parse_profile(prof);
  require<CheckpointError>(p.has_value(), "checkpoint ", r.path(), ": unknown profile '", prof, "'");
  h.profile = *p;
  h.identity_count = r.pod<std::int32_t>();
  if (h.kind == CheckpointKind::Fusion) {
    h.arc.scale = r.pod<double>();
    h.arc.margin = r.pod<double>();
    h.lambda = r.pod<double>();
    h.head_in = r.pod<std::int32_t>();
    h.head_out = r.pod<std::int32_t>();
  }
  return h;
}

template <typename Model>
void write_state(Writer& w, Model& model) {
  std::vector<std::pair<std::string, const nn::Tensor*>> blobs;
  nn::StateVisitor v{[&](const std::string& name, nn::Var& p) { blobs.emplace_back(name, &p.value()); },
                     [&](const std::string& name, nn::Tensor& t) { blobs.emplace_back(name, &t); }};
  model.visit(v);
  w.pod(static_cast<std::uint32_t>(blobs.size()));
  for (const auto& [name, t] : blobs) {
    w.str(name);
    w.tensor(*t);
  }
}

template <typename Model>
void read_state(Reader& r, Model& model) {
  const auto count = r.pod<std::uint32_t>();
  std::map<std::string, nn::Tensor> blobs;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.str();
    require<CheckpointError>(!blobs.count(name), "checkpoint ", r.path(), ": duplicate entry ", name);
    blobs.emplace(std::move(name), r.tensor());
  }
  require<CheckpointError>(r.at_end(), "checkpoint ", r.path(), " has trailing bytes");
  std::set<std::string> used;
  auto take = [&](const std::string& name, nn::Tensor& dst) {
    auto it = blobs.find(name);
    require<CheckpointError>(it != blobs.end(), "checkpoint ", r.path(), " is missing ", name);
    require<CheckpointError>(it->second.shape() == dst.shape(), "checkpoint ", r.path(), ": ", name, " has shape ",
                             nn::shape_str(it->second.shape()), ", model expects ", nn::shape_str(dst.shape()));
    dst = it->second;
    used.insert(name);
  };
  nn::StateVisitor v{[&](const std::string& name, nn::Var& p) { take(name, p.mutable_value()); },
                     [&](const std::string& name, nn::Tensor& t) { take(name, t); }};
  model.visit(v);
  for (const auto& [name, _] : blobs)
    require<CheckpointError>(used.count(name), "checkpoint ", r.path(), " has unexpected entry ", name);
}

}  // namespace detail

// FNV-1a over names and raw values of every parameter and buffer in visit order.
template <typename Model>
std::uint64_t state_digest(Model& model) {
  Fnv1a h;
  nn::StateVisitor v{[&](const std::string& name, nn::Var& p) {
                       h.update(name);
                       h.update(std::span<const unsigned char>(
                           reinterpret_cast<const unsigned char*>(p.value().data()), p.value().size() * sizeof(double)));
                     },
                     [&](const std::string& name, nn::Tensor& t) {
                       h.update(name);
                       h.update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(t.data()),
                                                               t.size() * sizeof(double)));
                     }};
  model.visit(v);
  return h.digest();
}

inline CheckpointHeader read_checkpoint_header(const std::string& path) {
  detail::Reader r(path);
  return detail::read_header(r);
}

inline void save_depthgen_checkpoint(const std::string& path, DepthgenModel& model, Profile profile) {
  detail::Writer w(path);
  CheckpointHeader h;
  h.kind = CheckpointKind::Depthgen;
  h.profile = profile;
  h.identity_count = model.backbone.identity_count();
  detail::write_header(w, h);
  detail::write_state(w, model);
  w.finish(path);
}

inline void save_fusion_checkpoint(const std::string& path, fusion::FusionModel& model, Profile profile,
                                   double lambda) {
  detail::Writer w(path);
  CheckpointHeader h;
  h.kind = CheckpointKind::Fusion;
  h.profile = profile;
  h.identity_count = model.identity_count();
  h.arc = model.rgb_classifier.params;
  h.lambda = lambda;
  h.head_in = model.heads.in_dim();
  h.head_out = model.heads.out_dim();
  detail::write_header(w, h);
  detail::write_state(w, model);
  w.finish(path);
}

namespace detail {
inline void check_header(const CheckpointHeader& h, CheckpointKind kind, std::optional<Profile> expected,
                         const std::string& path) {
  require<CheckpointError>(h.kind == kind, "checkpoint ", path, " holds a ",
                           h.kind == CheckpointKind::Depthgen ? "depthgen" : "fusion", " model");
  require<CheckpointError>(!expected || *expected == h.profile, "checkpoint ", path, " was written for profile ",
                           to_string(h.profile), ", requested ", expected ? to_string(*expected) : "");
  require<CheckpointError>(h.identity_count >= 1, "checkpoint ", path, ": identity_count ", h.identity_count);
}
}  // namespace detail

inline DepthgenModel load_depthgen_checkpoint(const std::string& path, std::optional<Profile> expected = std::nullopt) {
  detail::Reader r(path);
  const CheckpointHeader h = detail::read_header(r);
  detail::check_header(h, CheckpointKind::Depthgen, expected, path);
  DepthgenModel model(geometry_for(h.profile), h.identity_count, 0);
  detail::read_state(r, model);
  return model;
}

struct LoadedFusion {
  fusion::FusionModel model;
  CheckpointHeader header;
};

inline LoadedFusion load_fusion_checkpoint(const std::string& path, std::optional<Profile> expected = std::nullopt) {
  detail::Reader r(path);
  const CheckpointHeader h = detail::read_header(r);
  detail::check_header(h, CheckpointKind::Fusion, expected, path);
  const Geometry geom = geometry_for(h.profile);
  require<CheckpointError>(h.head_in == geom.flat_dim() && h.head_out == geom.embedding_dim, "checkpoint ", path,
                           ": head dims ", h.head_in, "->", h.head_out, " do not match profile ",
                           to_string(h.profile));
  LoadedFusion out{fusion::FusionModel(geom, h.identity_count, h.arc, 0), h};
  detail::read_state(r, out.model);
  return out;
}

}  // namespace rgbdface::training
