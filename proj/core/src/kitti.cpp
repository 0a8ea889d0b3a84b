#include "mono3d/kitti.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mono3d/check.hpp"

namespace mono3d {

namespace fs = std::filesystem;
using nlohmann::json;

KittiLabel KittiLabel::from_box(const Box3D& b, const std::string& type_name) {
  KittiLabel lab;
  lab.type = type_name;
  lab.h = b.h;
  lab.w = b.w;
  lab.l = b.l;
  lab.x = b.cx;
  lab.y = b.cy;
  lab.z = b.cz;
  lab.ry = b.ry;
  const Vec3 c = b.centroid();
  lab.alpha = yaw_to_obs(b.ry, c.x, c.z);
  return lab;
}

std::vector<KittiLabel> parse_labels(const std::string& text) {
  std::vector<KittiLabel> out;
  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    std::vector<std::string> tok;
    std::string t;
    while (row >> t) tok.push_back(t);
    if (tok.size() != 15 && tok.size() != 16)
      throw ParseError(cat("label line ", line_no, ": expected 15 or 16 fields, got ", tok.size()),
                       line_no);
    KittiLabel lab;
    try {
      std::size_t i = 0;
      lab.type = tok[i++];
      lab.truncation = std::stod(tok[i++]);
      lab.occlusion = std::stoi(tok[i++]);
      lab.alpha = std::stod(tok[i++]);
      for (int b = 0; b < 4; ++b) lab.bbox[static_cast<std::size_t>(b)] = std::stod(tok[i++]);
      lab.h = std::stod(tok[i++]);
      lab.w = std::stod(tok[i++]);
      lab.l = std::stod(tok[i++]);
      lab.x = std::stod(tok[i++]);
      lab.y = std::stod(tok[i++]);
      lab.z = std::stod(tok[i++]);
      lab.ry = std::stod(tok[i++]);
      if (tok.size() == 16) lab.score = std::stod(tok[i++]);
    } catch (const std::exception&) {
      throw ParseError(cat("label line ", line_no, ": malformed numeric field"), line_no);
    }
    out.push_back(std::move(lab));
  }
  return out;
}

namespace {

std::string two_decimals(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string format_labels(const std::vector<KittiLabel>& labels) {
  std::string out;
  for (const KittiLabel& lab : labels) {
    out += lab.type;
    out += ' ';
    out += two_decimals(lab.truncation);
    out += ' ';
    out += std::to_string(lab.occlusion);
    out += ' ';
    out += two_decimals(lab.alpha);
    for (double b : lab.bbox) {
      out += ' ';
      out += two_decimals(b);
    }
    for (double v : {lab.h, lab.w, lab.l, lab.x, lab.y, lab.z, lab.ry}) {
      out += ' ';
      out += two_decimals(v);
    }
    if (lab.score) {
      out += ' ';
      out += two_decimals(*lab.score);
    }
    out += '\n';
  }
  return out;
}

CameraIntrinsics parse_calib(const std::string& text) {
  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.rfind("P2:", 0) != 0) continue;
    std::istringstream row(line.substr(3));
    std::vector<double> v;
    double d;
    while (row >> d) v.push_back(d);
    if (v.size() != 12)
      throw ParseError(cat("calib line ", line_no, ": P2 carries ", v.size(),
                           " numbers, expected 12"),
                       line_no);
    CameraIntrinsics k;
    k.fx = v[0];
    k.px = v[2];
    k.fy = v[5];
    k.py = v[6];
    if (!k.valid())
      throw ParseError(cat("calib line ", line_no, ": non-positive focal length"), line_no);
    return k;
  }
  throw ParseError("calib: no P2 row found");
}

std::string format_calib(const CameraIntrinsics& k) {
  std::ostringstream os;
  os.precision(17);
  os << "P2: " << k.fx << " 0 " << k.px << " 0 0 " << k.fy << " " << k.py << " 0 0 0 1 0\n";
  return os.str();
}

void write_pgm(const fs::path& path, int w, int h, const std::vector<std::uint8_t>& mask01) {
  if (static_cast<int>(mask01.size()) != w * h)
    throw std::invalid_argument(cat("pgm: ", mask01.size(), " pixels for ", w, "x", h));
  std::vector<std::uint8_t> bytes(mask01.size());
  for (std::size_t i = 0; i < mask01.size(); ++i) bytes[i] = mask01[i] ? 255 : 0;
  write_pgm_gray(path, w, h, bytes);
}

void write_pgm_gray(const fs::path& path, int w, int h, const std::vector<std::uint8_t>& gray) {
  if (static_cast<int>(gray.size()) != w * h)
    throw std::invalid_argument(cat("pgm: ", gray.size(), " pixels for ", w, "x", h));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(cat("pgm: cannot open '", path.string(), "' for writing"));
  os << "P5\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!os) throw std::runtime_error(cat("pgm: write to '", path.string(), "' failed"));
}

std::vector<std::uint8_t> read_pgm(const fs::path& path, int* w, int* h) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(cat("pgm: cannot open '", path.string(), "'"));
  std::string magic;
  is >> magic;
  if (magic != "P5") throw ParseError(cat("pgm: '", path.string(), "' is not binary P5"));
  int pw, ph, maxval;
  is >> pw >> ph >> maxval;
  if (!is || pw <= 0 || ph <= 0 || maxval <= 0 || maxval > 255)
    throw ParseError(cat("pgm: '", path.string(), "' has a malformed header"));
  is.get();  // single whitespace after the header
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(pw) * ph);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!is) throw ParseError(cat("pgm: '", path.string(), "' is truncated"));
  for (auto& b : bytes) b = b ? 1 : 0;
  if (w) *w = pw;
  if (h) *h = ph;
  return bytes;
}

std::string frame_name(int frame) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", frame);
  return buf;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(cat("cannot open '", path.string(), "'"));
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(cat("cannot open '", path.string(), "' for writing"));
  os << text;
  if (!os) throw std::runtime_error(cat("write to '", path.string(), "' failed"));
}

void write_frame(const fs::path& root, int frame, const SyntheticScene& scene,
                 const std::vector<std::string>& class_names) {
  const std::string name = frame_name(frame);
  fs::create_directories(root / "label_2");
  fs::create_directories(root / "calib");
  const fs::path mask_dir = root / "masks" / name;
  fs::create_directories(mask_dir);

  std::vector<KittiLabel> labels;
  json index = json::array();
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SceneObject& o = scene.objects[i];
    if (o.class_id < 0 || o.class_id >= static_cast<int>(class_names.size()))
      throw std::invalid_argument(cat("write_frame: class ", o.class_id, " has no name"));
    KittiLabel lab = KittiLabel::from_box(o.box, class_names[static_cast<std::size_t>(o.class_id)]);
    lab.truncation = o.truncation;
    lab.occlusion = o.occlusion;
    lab.bbox = o.bbox2d;
    labels.push_back(lab);
    if (!o.vis_mask.empty()) {
      char mask_name[32];
      std::snprintf(mask_name, sizeof(mask_name), "obj_%03zu.pgm", i);
      write_pgm(mask_dir / mask_name, scene.image.shape()[1], scene.image.shape()[0], o.vis_mask);
      index.push_back(std::string(mask_name));
    } else {
      index.push_back(nullptr);
    }
  }
  write_text_file(root / "label_2" / (name + ".txt"), format_labels(labels));
  write_text_file(root / "calib" / (name + ".txt"), format_calib(scene.k));
  json meta;
  meta["image_w"] = scene.image.shape()[1];
  meta["image_h"] = scene.image.shape()[0];
  meta["objects"] = index;
  write_text_file(mask_dir / "index.json", meta.dump(2) + "\n");
}

Frame read_frame(const fs::path& root, int frame, bool with_masks) {
  const std::string name = frame_name(frame);
  Frame out;
  out.labels = parse_labels(read_text_file(root / "label_2" / (name + ".txt")));
  out.k = parse_calib(read_text_file(root / "calib" / (name + ".txt")));
  out.masks.assign(out.labels.size(), {});
  const fs::path mask_dir = root / "masks" / name;
  if (!with_masks || !fs::exists(mask_dir / "index.json")) return out;

  json meta;
  try {
    meta = json::parse(read_text_file(mask_dir / "index.json"));
  } catch (const json::parse_error& e) {
    throw ParseError(cat("mask index '", (mask_dir / "index.json").string(), "': ", e.what()));
  }
  out.image_w = meta.value("image_w", 0);
  out.image_h = meta.value("image_h", 0);
  const auto& objects = meta.at("objects");
  if (objects.size() != out.labels.size())
    throw ParseError(cat("mask index for frame ", name, " lists ", objects.size(),
                         " rows but the label file has ", out.labels.size()));
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].is_null()) continue;
    int w = 0, h = 0;
    out.masks[i] = read_pgm(mask_dir / objects[i].get<std::string>(), &w, &h);
    if ((out.image_w && w != out.image_w) || (out.image_h && h != out.image_h))
      throw ParseError(cat("mask for frame ", name, " row ", i, " is ", w, "x", h,
                           ", index says ", out.image_w, "x", out.image_h));
    if (std::find(out.masks[i].begin(), out.masks[i].end(), std::uint8_t{1}) ==
        out.masks[i].end())
      throw ParseError(cat("mask for frame ", name, " row ", i, " is all background"));
  }
  return out;
}

std::vector<int> list_frames(const fs::path& root) {
  const fs::path dir = root / "label_2";
  if (!fs::is_directory(dir))
    throw std::runtime_error(cat("dataset: '", dir.string(), "' is not a directory"));
  std::vector<int> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    try {
      frames.push_back(std::stoi(entry.path().stem().string()));
    } catch (const std::exception&) {
      throw ParseError(cat("dataset: unexpected label file '", entry.path().string(), "'"));
    }
  }
  std::sort(frames.begin(), frames.end());
  return frames;
}

void write_detections(const fs::path& dir, int frame, const std::vector<KittiLabel>& dets) {
  fs::create_directories(dir);
  for (const KittiLabel& d : dets)
    if (!d.score)
      throw std::invalid_argument("write_detections: every detection row needs a score");
  write_text_file(dir / (frame_name(frame) + ".txt"), format_labels(dets));
}

}  // namespace mono3d
