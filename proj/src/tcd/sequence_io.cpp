// SPDX-License-Identifier: Apache-2.0
#include "tcd/sequence_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tcd {

namespace {

using json = nlohmann::json;

constexpr char kMagic[6] = {'P', 'S', 'E', 'Q', '1', '\n'};

void check_record(const SequenceRecord& record) {
  record.sequence.validate();
  record.skeleton.validate();
  if (record.skeleton.joints() != record.sequence.joints())
    fail(ErrorCode::structure, "sequence/skeleton joint count mismatch");
  if (record.observation_len < 0 || record.observation_len > record.sequence.frames())
    fail(ErrorCode::invalid_argument, "observation_len out of range");
  if (record.mask) {
    record.mask->validate();
    if (record.mask->frames != record.sequence.frames() ||
        record.mask->joints != record.sequence.joints())
      fail(ErrorCode::structure, "mask shape does not match sequence");
  }
}

json skeleton_to_json(const SkeletonSpec& s) {
  json groups = json::object();
  for (const auto& [name, joints] : s.limb_groups) groups[name] = joints;
  return json{{"joint_names", s.joint_names},
              {"parent_index", s.parent_index},
              {"limb_groups", groups}};
}

SkeletonSpec skeleton_from_json(const json& j) {
  SkeletonSpec s;
  s.joint_names = j.at("joint_names").get<std::vector<std::string>>();
  s.parent_index = j.at("parent_index").get<std::vector<int>>();
  for (const auto& [name, joints] : j.at("limb_groups").items())
    s.limb_groups[name] = joints.get<std::vector<int>>();
  return s;
}

json header_json(const SequenceRecord& record) {
  // std::map-backed json keeps keys sorted, so serialization is canonical.
  return json{{"fps", record.sequence.fps},
              {"frames", record.sequence.frames()},
              {"joints", record.sequence.joints()},
              {"observation_len", record.observation_len},
              {"role", record.sequence.role_tag == RoleTag::full ? "full"
                                                                 : "observation_only"},
              {"has_mask", record.mask.has_value()},
              {"skeleton", skeleton_to_json(record.skeleton)}};
}

void parse_header(const json& h, SequenceRecord& record, int& frames, int& joints,
                  bool& has_mask, const std::string& path) {
  try {
    frames = h.at("frames").get<int>();
    joints = h.at("joints").get<int>();
    record.sequence.fps = h.at("fps").get<double>();
    record.observation_len = h.at("observation_len").get<int>();
    std::string role = h.at("role").get<std::string>();
    if (role == "full")
      record.sequence.role_tag = RoleTag::full;
    else if (role == "observation_only")
      record.sequence.role_tag = RoleTag::observation_only;
    else
      fail(ErrorCode::header_mismatch, path + ": unknown role tag " + role);
    has_mask = h.at("has_mask").get<bool>();
    record.skeleton = skeleton_from_json(h.at("skeleton"));
  } catch (const json::exception& e) {
    fail(ErrorCode::header_mismatch, path + ": header missing fields (" + e.what() + ")");
  }
  if (frames < 2 || joints < 2)
    fail(ErrorCode::header_mismatch, path + ": header declares degenerate shape");
  if (record.skeleton.joints() != joints)
    fail(ErrorCode::header_mismatch, path + ": skeleton size disagrees with joints");
  if (record.observation_len < 0 || record.observation_len > frames)
    fail(ErrorCode::header_mismatch, path + ": observation_len out of range");
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void put_f32(std::string& out, float v) {
  static_assert(sizeof(float) == 4);
  char b[4];
  std::memcpy(b, &v, 4);
  // Host is little-endian on all supported targets; keep the explicit copy
  // in one place in case that ever changes.
  out.append(b, 4);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, path + ": cannot open for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(ErrorCode::io, path + ": read failure");
  return buf.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, path + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) fail(ErrorCode::io, path + ": write failure");
}

}  // namespace

void write_sequence(const SequenceRecord& record, const std::string& path) {
  check_record(record);
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  std::string header = header_json(record).dump();
  put_u32(out, static_cast<uint32_t>(header.size()));
  out += header;
  for (double v : record.sequence.coords.data) put_f32(out, static_cast<float>(v));
  if (record.mask)
    out.append(reinterpret_cast<const char*>(record.mask->bits.data()),
               record.mask->bits.size());
  write_file(path, out);
}

SequenceRecord read_sequence(const std::string& path) {
  std::string bytes = read_file(path);
  if (bytes.size() < sizeof(kMagic) + 4 || std::memcmp(bytes.data(), "PSEQ", 4) != 0)
    fail(ErrorCode::format, path + ": unrecognized format (bad magic)");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    fail(ErrorCode::version, path + ": unsupported sequence container version");
  size_t off = sizeof(kMagic);
  uint32_t header_len = get_u32(reinterpret_cast<const unsigned char*>(bytes.data()) + off);
  off += 4;
  if (off + header_len > bytes.size())
    fail(ErrorCode::truncated, path + ": header extends past end of file");
  json h;
  try {
    h = json::parse(bytes.substr(off, header_len));
  } catch (const json::exception& e) {
    fail(ErrorCode::header_mismatch, path + ": header is not valid JSON (" +
                                         std::string(e.what()) + ")");
  }
  off += header_len;

  SequenceRecord record;
  int frames = 0, joints = 0;
  bool has_mask = false;
  parse_header(h, record, frames, joints, has_mask, path);

  size_t n = static_cast<size_t>(frames) * joints * 3;
  if (off + n * 4 > bytes.size())
    fail(ErrorCode::truncated, path + ": payload shorter than header promises");
  record.sequence.coords = Tensor3(frames, joints);
  for (size_t i = 0; i < n; ++i) {
    float v;
    std::memcpy(&v, bytes.data() + off + i * 4, 4);
    record.sequence.coords.data[i] = static_cast<double>(v);
  }
  off += n * 4;

  if (has_mask) {
    if (off + n > bytes.size())
      fail(ErrorCode::truncated, path + ": mask shorter than header promises");
    AvailabilityMask m;
    m.frames = frames;
    m.joints = joints;
    m.observation_len = record.observation_len;
    m.bits.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off),
                  bytes.begin() + static_cast<std::ptrdiff_t>(off + n));
    for (uint8_t b : m.bits)
      if (b > 1) fail(ErrorCode::corrupt, path + ": mask byte outside {0,1}");
    m.validate();
    record.mask = std::move(m);
    off += n;
  }
  if (off != bytes.size())
    fail(ErrorCode::corrupt, path + ": trailing bytes after payload");

  if (!record.sequence.coords.all_finite())
    fail(ErrorCode::corrupt, path + ": non-finite coordinate in payload");
  check_record(record);
  return record;
}

void write_sequence_csv(const SequenceRecord& record, const std::string& path) {
  check_record(record);
  std::ostringstream out;
  out << "# pseq-csv 1\n";
  out << "# fps " << json(record.sequence.fps).dump() << "\n";
  out << "# observation_len " << record.observation_len << "\n";
  out << "# role "
      << (record.sequence.role_tag == RoleTag::full ? "full" : "observation_only") << "\n";
  out << "# skeleton " << skeleton_to_json(record.skeleton).dump() << "\n";
  out << "frame,joint,x,y,z,available\n";
  char buf[160];
  const Tensor3& t = record.sequence.coords;
  for (int f = 0; f < t.frames; ++f)
    for (int j = 0; j < t.joints; ++j) {
      // %.9g round-trips float32 exactly.
      int avail = record.mask ? record.mask->at(f, j, 0) : (f < record.observation_len);
      std::snprintf(buf, sizeof(buf), "%d,%d,%.9g,%.9g,%.9g,%d\n", f, j,
                    static_cast<float>(t.at(f, j, 0)), static_cast<float>(t.at(f, j, 1)),
                    static_cast<float>(t.at(f, j, 2)), avail);
      out << buf;
    }
  write_file(path, out.str());
}

SequenceRecord read_sequence_csv(const std::string& path) {
  std::string bytes = read_file(path);
  std::istringstream in(bytes);
  std::string line;
  SequenceRecord record;
  bool saw_magic = false, saw_skeleton = false;
  std::string role = "full";
  struct Row {
    int f, j, a;
    double x, y, z;
  };
  std::vector<Row> rows;
  int max_frame = -1, max_joint = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string key;
      ls >> key;
      if (key == "pseq-csv") {
        int v = 0;
        ls >> v;
        if (v != 1) fail(ErrorCode::version, path + ": unsupported csv version");
        saw_magic = true;
      } else if (key == "fps") {
        ls >> record.sequence.fps;
      } else if (key == "observation_len") {
        ls >> record.observation_len;
      } else if (key == "role") {
        ls >> role;
      } else if (key == "skeleton") {
        std::string rest;
        std::getline(ls, rest);
        try {
          record.skeleton = skeleton_from_json(json::parse(rest));
        } catch (const json::exception& e) {
          fail(ErrorCode::header_mismatch,
               path + ": bad skeleton line (" + std::string(e.what()) + ")");
        }
        saw_skeleton = true;
      }
      continue;
    }
    if (line.rfind("frame,", 0) == 0) continue;  // column header
    int f, j, a;
    double x, y, z;
    if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%d", &f, &j, &x, &y, &z, &a) != 6)
      fail(ErrorCode::corrupt, path + ": unparseable csv row: " + line);
    if (f < 0 || j < 0 || (a != 0 && a != 1))
      fail(ErrorCode::corrupt, path + ": csv row out of range: " + line);
    rows.push_back({f, j, a, x, y, z});
    max_frame = std::max(max_frame, f);
    max_joint = std::max(max_joint, j);
  }
  if (!saw_magic) fail(ErrorCode::format, path + ": unrecognized format (no pseq-csv line)");
  if (!saw_skeleton) fail(ErrorCode::header_mismatch, path + ": skeleton line missing");
  int frames = max_frame + 1, joints = max_joint + 1;
  // A shortfall is truncation; a surplus necessarily duplicates a cell and is
  // reported as corruption by the scan below.
  if (rows.size() < static_cast<size_t>(frames) * joints)
    fail(ErrorCode::truncated, path + ": csv row count does not cover frames x joints");
  record.sequence.role_tag =
      role == "observation_only" ? RoleTag::observation_only : RoleTag::full;
  record.sequence.coords = Tensor3(frames, joints);
  AvailabilityMask m(frames, joints, std::clamp(record.observation_len, 0, frames));
  std::vector<uint8_t> seen(static_cast<size_t>(frames) * joints, 0);
  bool mask_is_trivial = true;
  for (const Row& r : rows) {
    size_t cell = static_cast<size_t>(r.f) * joints + r.j;
    if (seen[cell]++) fail(ErrorCode::corrupt, path + ": duplicate csv cell");
    record.sequence.coords.at(r.f, r.j, 0) = r.x;
    record.sequence.coords.at(r.f, r.j, 1) = r.y;
    record.sequence.coords.at(r.f, r.j, 2) = r.z;
    bool observed = r.f < record.observation_len;
    m.set_joint(r.f, r.j, observed ? static_cast<uint8_t>(r.a) : 0);
    if (r.a != (observed ? 1 : 0)) mask_is_trivial = false;
  }
  // Text parses to the nearest double; the payload contract is float32
  // values, so snap to recover the written bits exactly.
  record.sequence.coords.snap_f32();
  if (!record.sequence.coords.all_finite())
    fail(ErrorCode::corrupt, path + ": non-finite coordinate in payload");
  if (!mask_is_trivial) record.mask = std::move(m);
  check_record(record);
  return record;
}

namespace {
bool has_csv_extension(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
}
}  // namespace

void write_sequence_auto(const SequenceRecord& record, const std::string& path) {
  if (has_csv_extension(path))
    write_sequence_csv(record, path);
  else
    write_sequence(record, path);
}

SequenceRecord read_sequence_auto(const std::string& path) {
  return has_csv_extension(path) ? read_sequence_csv(path) : read_sequence(path);
}

}  // namespace tcd
