#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rgbdface/checksum.hpp"
#include "rgbdface/dataio/png.hpp"
#include "rgbdface/dataio/types.hpp"

namespace rgbdface::dataio {

inline constexpr std::string_view kManifestHeader = "rgb,depth,identity,subset,session";
inline constexpr std::string_view kManifestName = "manifest.csv";

// Writes `<dir>/manifest.csv` plus `rgb/NNNNNN.png` and `depth/NNNNNN.png`.
// Output bytes depend only on the dataset contents.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir, int depth_bits = 8) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");
  std::ostringstream manifest;
  manifest << kManifestHeader << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    const RgbdSample& s = ds.samples[i];
    const std::string rgb_rel = std::string("rgb/") + name;
    const std::string depth_rel = std::string("depth/") + name;
    write_rgb_png((dir / rgb_rel).string(), s.rgb.pixels());
    write_depth_png((dir / depth_rel).string(), s.depth.pixels(), depth_bits);
    manifest << rgb_rel << ',' << depth_rel << ',' << s.identity << ',' << to_string(s.subset) << ','
             << to_string(s.session) << '\n';
  }
  std::ofstream out(dir / kManifestName, std::ios::binary);
  require<std::runtime_error>(static_cast<bool>(out), "cannot write manifest in ", dir.string());
  out << manifest.str();
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

// Loads a dataset from a manifest. Accepts the manifest file or its directory.
// Errors name the offending manifest line (header is line 1).
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  namespace fs = std::filesystem;
  const fs::path path = fs::is_directory(manifest_path) ? manifest_path / kManifestName : manifest_path;
  std::ifstream in(path, std::ios::binary);
  require<LoadError>(static_cast<bool>(in), "cannot open manifest ", path.string());
  std::stringstream whole;
  whole << in.rdbuf();
  const std::string text = whole.str();

  Dataset ds;
  Fnv1a h;
  h.update(text);
  ds.manifest_digest = h.digest();

  const fs::path root = path.parent_path();
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  int max_id = -1;
  while (std::getline(lines, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      require<LoadError>(line == kManifestHeader, path.string(), " line 1: expected header '", kManifestHeader,
                         "', got '", line, "'");
      continue;
    }
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    const auto where = [&] { return path.string() + " line " + std::to_string(lineno); };
    require<LoadError>(fields.size() == 5, where(), ": expected 5 fields, got ", fields.size());

    RgbdSample s;
    int id = -1;
    const auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), id);
    require<LoadError>(ec == std::errc() && ptr == fields[2].data() + fields[2].size() && id >= 0, where(),
                       ": invalid identity '", fields[2], "'");
    s.identity = id;
    const auto subset = parse_subset(fields[3]);
    require<LoadError>(subset.has_value(), where(), ": unknown subset tag '", fields[3], "'");
    s.subset = *subset;
    const auto session = parse_session(fields[4]);
    require<LoadError>(session.has_value(), where(), ": unknown session tag '", fields[4], "'");
    s.session = *session;

    DecodedImage rgb, depth;
    try {
      rgb = read_png((root / std::string(fields[0])).string());
      depth = read_png((root / std::string(fields[1])).string());
    } catch (const LoadError& e) {
      raise<LoadError>(where(), ": ", e.what());
    }
    require<LoadError>(rgb.channels == 3 && rgb.bit_depth == 8, where(), ": RGB image must be 8-bit 3-channel");
    require<LoadError>(depth.channels == 1, where(), ": depth image must be single-channel");
    require<LoadError>(rgb.width == depth.width && rgb.height == depth.height, where(), ": RGB is ", rgb.height,
                       "x", rgb.width, " but depth is ", depth.height, "x", depth.width);
    require<LoadError>(rgb.height % kSpatialQuantum == 0 && rgb.width % kSpatialQuantum == 0, where(),
                       ": image dims ", rgb.height, "x", rgb.width, " not divisible by 32");
    if (!ds.samples.empty())
      require<LoadError>(rgb.height == ds.height() && rgb.width == ds.width(), where(), ": resolution ",
                         rgb.height, "x", rgb.width, " differs from earlier rows");

    const int H = rgb.height, W = rgb.width;
    nn::Tensor rgb_t({3, H, W}), depth_t({1, H, W});
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        const std::size_t px = static_cast<std::size_t>(i) * W + j;
        for (int c = 0; c < 3; ++c)
          rgb_t[(static_cast<std::size_t>(c) * H + i) * W + j] = rgb.samples[px * 3 + c] / 255.0;
        depth_t[px] = depth.samples[px] / (depth.bit_depth == 8 ? 255.0 : 65535.0);
      }
    s.rgb = RgbImage(std::move(rgb_t));
    s.depth = DepthMap(std::move(depth_t));
    max_id = std::max(max_id, id);
    ds.samples.push_back(std::move(s));
  }
  require<LoadError>(lineno >= 1, path.string(), ": empty manifest (missing header)");

  ds.identity_count = max_id + 1;
  std::vector<bool> seen(static_cast<std::size_t>(ds.identity_count), false);
  for (const auto& s : ds.samples) seen[s.identity] = true;
  for (int id = 0; id < ds.identity_count; ++id)
    require<LoadError>(seen[id], path.string(), ": identity ", id, " has no rows (labels must be contiguous)");
  return ds;
}

}  // namespace rgbdface::dataio
