#include "dexsynth/contact_maps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "dexsynth/array_io.hpp"

namespace dexsynth {

namespace {

constexpr double kProbFloor = 1e-8;
constexpr double kUnderflow = 1e-100;

}  // namespace

double distance_to_prob(double distance, double sigma_c) {
  if (sigma_c <= 0.0) throw Error("distance_to_prob: sigma_c must be positive");
  return std::exp(-distance * distance / (2.0 * sigma_c * sigma_c));
}

double prob_to_distance(double probability, double sigma_c, bool* clamped) {
  if (sigma_c <= 0.0) throw Error("prob_to_distance: sigma_c must be positive");
  bool was_clamped = false;
  if (!(probability > 0.0)) {
    probability = kProbFloor;
    was_clamped = true;
  }
  if (clamped) *clamped = was_clamped;
  probability = std::min(probability, 1.0);
  return std::sqrt(-2.0 * sigma_c * sigma_c * std::log(probability));
}

ContactFrame ContactFrame::zeros(const Points& surface_points, int dim) {
  ContactFrame f;
  f.surface_points = surface_points;
  f.contact = MatX::Zero(surface_points.rows(), kHands);
  for (int h = 0; h < kHands; ++h) {
    f.embedding[h] = MatX::Zero(surface_points.rows(), dim);
    f.nearest_vertex[h].assign(surface_points.rows(), -1);
  }
  return f;
}

void ContactFrame::clear_maps() {
  contact.setZero();
  for (int h = 0; h < kHands; ++h) {
    embedding[h].setZero();
    std::fill(nearest_vertex[h].begin(), nearest_vertex[h].end(), -1);
  }
}

void ContactFrame::gate_embeddings(double gate) {
  for (int h = 0; h < kHands; ++h) {
    for (int q = 0; q < points(); ++q) {
      if (contact(q, h) <= gate) embedding[h].row(q).setZero();
    }
  }
}

VecX ContactFrame::flatten() const {
  const int n = points();
  const int d = dim();
  const int stride = 1 + d;
  VecX out(n * kHands * stride);
  for (int q = 0; q < n; ++q) {
    for (int h = 0; h < kHands; ++h) {
      const int base = (q * kHands + h) * stride;
      out[base] = contact(q, h);
      for (int k = 0; k < d; ++k) out[base + 1 + k] = embedding[h](q, k);
    }
  }
  return out;
}

void ContactFrame::assign_flat(const Eigen::Ref<const VecX>& values) {
  const int n = points();
  const int d = dim();
  const int stride = 1 + d;
  if (values.size() != n * kHands * stride) throw Error("ContactFrame::assign_flat: size mismatch");
  for (int q = 0; q < n; ++q) {
    for (int h = 0; h < kHands; ++h) {
      const int base = (q * kHands + h) * stride;
      contact(q, h) = values[base];
      for (int k = 0; k < d; ++k) embedding[h](q, k) = values[base + 1 + k];
    }
  }
}

void ContactSequence::validate() const {
  if (frames.empty()) return;
  const int n = points();
  const int d = dim();
  for (size_t l = 0; l < frames.size(); ++l) {
    const auto& f = frames[l];
    if (f.points() != n || f.contact.rows() != n || f.contact.cols() != kHands) {
      throw Error("contact sequence: frame " + std::to_string(l) + " has inconsistent point count");
    }
    for (int h = 0; h < kHands; ++h) {
      if (f.embedding[h].rows() != n || f.embedding[h].cols() != d) {
        throw Error("contact sequence: frame " + std::to_string(l) + " has inconsistent embedding shape");
      }
    }
    if ((f.contact.array() < 0.0).any() || (f.contact.array() > 1.0).any()) {
      throw Error("contact sequence: frame " + std::to_string(l) + " has contact values outside [0,1]");
    }
  }
}

MatX ContactSequence::flatten() const {
  if (frames.empty()) return MatX();
  const int width = points() * kHands * (1 + dim());
  MatX out(length(), width);
  for (int l = 0; l < length(); ++l) out.row(l) = frames[l].flatten().transpose();
  return out;
}

ContactSequence build_gt_maps(const ContactScene& scene, const EmbeddingTable& table, double sigma_c) {
  if (scene.surface_points.size() != scene.hand_vertices.size()) {
    throw Error("build_gt_maps: surface/hand frame counts differ");
  }
  ContactSequence seq;
  seq.sigma_c = sigma_c;
  seq.frames.reserve(scene.surface_points.size());
  for (size_t l = 0; l < scene.surface_points.size(); ++l) {
    const Points& pts = scene.surface_points[l];
    ContactFrame frame = ContactFrame::zeros(pts, table.dim());
    for (int h = 0; h < kHands; ++h) {
      const Points& hv = scene.hand_vertices[l][h];
      if (hv.rows() == 0) continue;
      if (hv.rows() != table.rows()) throw Error("build_gt_maps: hand vertex count does not match embedding table");
      for (int q = 0; q < pts.rows(); ++q) {
        int best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (int i = 0; i < hv.rows(); ++i) {
          const double d2 = (hv.row(i) - pts.row(q)).squaredNorm();
          if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
          }
        }
        double c = distance_to_prob(std::sqrt(best_d2), sigma_c);
        if (c < kUnderflow) c = 0.0;
        frame.contact(q, h) = c;
        frame.embedding[h].row(q) = table.values.row(best);
        frame.nearest_vertex[h][q] = best;
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

MaskResult mask_maps(const ContactSequence& seq, double full_p, double frame_p, std::uint64_t seed) {
  if (full_p < 0.0 || full_p > 1.0 || frame_p < 0.0 || frame_p > 1.0) {
    throw Error("mask_maps: probabilities must lie in [0,1]");
  }
  MaskResult out;
  out.maps = seq;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int length = seq.length();
  if (unit(rng) < full_p) {
    out.fully_masked = true;
    for (auto& f : out.maps.frames) f.clear_maps();
    out.masked_frames.resize(length);
    std::iota(out.masked_frames.begin(), out.masked_frames.end(), 0);
    return out;
  }
  const int count = static_cast<int>(std::lround(frame_p * length));
  std::vector<int> order(length);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  out.masked_frames.assign(order.begin(), order.begin() + count);
  std::sort(out.masked_frames.begin(), out.masked_frames.end());
  for (int l : out.masked_frames) out.maps.frames[l].clear_maps();
  return out;
}

void write_contact_sequence(const std::filesystem::path& path, const ContactSequence& seq) {
  seq.validate();
  ArrayFile file;
  const int length = seq.length();
  const int n = seq.points();
  const int d = seq.dim();
  file.meta = {{"kind", "contact_sequence"},
               {"L", length},
               {"n", n},
               {"d", d},
               {"sigma_c", seq.sigma_c},
               {"layout", "maps[L][n][hand][C, E_0..E_{d-1}], surface_points[L][n][3], row-major"}};
  NamedArray maps{"maps", {length, n, kHands, 1 + d}, {}};
  NamedArray pts{"surface_points", {length, n, 3}, {}};
  maps.data.reserve(static_cast<size_t>(maps.element_count()));
  pts.data.reserve(static_cast<size_t>(pts.element_count()));
  for (const auto& f : seq.frames) {
    const VecX flat = f.flatten();
    maps.data.insert(maps.data.end(), flat.data(), flat.data() + flat.size());
    pts.data.insert(pts.data.end(), f.surface_points.data(), f.surface_points.data() + f.surface_points.size());
  }
  file.arrays.push_back(std::move(maps));
  file.arrays.push_back(std::move(pts));
  file.write(path);
}

ContactSequence read_contact_sequence(const std::filesystem::path& path) {
  const ArrayFile file = ArrayFile::read(path);
  if (file.meta.value("kind", "") != "contact_sequence") {
    throw Error(path.string() + ": not a contact sequence file");
  }
  const int length = file.meta.at("L").get<int>();
  const int n = file.meta.at("n").get<int>();
  const int d = file.meta.at("d").get<int>();
  const auto& maps = file.get("maps");
  const auto& pts = file.get("surface_points");
  const std::vector<std::int64_t> map_shape{length, n, kHands, 1 + d};
  const std::vector<std::int64_t> pts_shape{length, n, 3};
  if (maps.shape != map_shape || pts.shape != pts_shape) throw Error(path.string() + ": array shapes disagree with header");
  ContactSequence seq;
  seq.sigma_c = file.meta.at("sigma_c").get<double>();
  const int map_width = n * kHands * (1 + d);
  for (int l = 0; l < length; ++l) {
    Points p(n, 3);
    std::copy_n(pts.data.begin() + static_cast<std::ptrdiff_t>(l) * n * 3, n * 3, p.data());
    ContactFrame f = ContactFrame::zeros(p, d);
    f.assign_flat(Eigen::Map<const VecX>(maps.data.data() + static_cast<std::ptrdiff_t>(l) * map_width, map_width));
    seq.frames.push_back(std::move(f));
  }
  seq.validate();
  return seq;
}

}  // namespace dexsynth
