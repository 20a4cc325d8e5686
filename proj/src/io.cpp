#include "steinscan/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Geometry>

#include "steinscan/errors.hpp"

namespace steinscan {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

namespace {

std::string strip(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(strip(s.substr(start)));
      break;
    }
    out.push_back(strip(s.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

double parse_value(const std::string& token, const std::string& path, std::size_t line_no) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    fail(ErrorCode::parse,
         path + ": line " + std::to_string(line_no) + ": cannot parse number '" + token + "'");
  }
  if (!std::isfinite(value)) {
    fail(ErrorCode::parse,
         path + ": line " + std::to_string(line_no) + ": non-finite coordinate '" + token + "'");
  }
  return value;
}

PointCloud load_csv_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = strip(line);
    if (body.empty() || body[0] == '#') continue;
    const auto fields = split(body, ',');
    if (fields.size() != 3) {
      fail(ErrorCode::parse,
           path + ": line " + std::to_string(line_no) + ": expected 3 fields, got " +
               std::to_string(fields.size()));
    }
    cloud.points.emplace_back(parse_value(fields[0], path, line_no),
                              parse_value(fields[1], path, line_no),
                              parse_value(fields[2], path, line_no));
  }
  if (cloud.empty()) fail(ErrorCode::parse, path + ": empty point cloud");
  return cloud;
}

PointCloud load_ply_ascii(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || strip(line) != "ply") {
    fail(ErrorCode::parse, path + ": not a PLY file");
  }
  ++line_no;

  long vertex_count = -1;
  int x_idx = -1, y_idx = -1, z_idx = -1;
  int property_count = 0;
  bool in_vertex_element = false;
  bool saw_format = false;

  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_ws(strip(line));
    if (tokens.empty()) continue;
    if (tokens[0] == "comment") continue;
    if (tokens[0] == "format") {
      if (tokens.size() < 2 || tokens[1] != "ascii") {
        fail(ErrorCode::parse, path + ": only ascii PLY is supported");
      }
      saw_format = true;
    } else if (tokens[0] == "element") {
      in_vertex_element = tokens.size() >= 3 && tokens[1] == "vertex";
      if (in_vertex_element) vertex_count = std::stol(tokens[2]);
    } else if (tokens[0] == "property" && in_vertex_element) {
      if (tokens.size() >= 3) {
        if (tokens[2] == "x") x_idx = property_count;
        if (tokens[2] == "y") y_idx = property_count;
        if (tokens[2] == "z") z_idx = property_count;
      }
      ++property_count;
    } else if (tokens[0] == "end_header") {
      break;
    }
  }
  if (!saw_format || vertex_count < 0 || x_idx < 0 || y_idx < 0 || z_idx < 0) {
    fail(ErrorCode::parse, path + ": missing vertex element or x/y/z properties");
  }

  PointCloud cloud;
  cloud.points.reserve(vertex_count);
  for (long v = 0; v < vertex_count; ++v) {
    if (!std::getline(in, line)) {
      fail(ErrorCode::parse, path + ": expected " + std::to_string(vertex_count) +
                                 " vertices, file ended at " + std::to_string(v));
    }
    ++line_no;
    const auto tokens = split_ws(strip(line));
    if (static_cast<int>(tokens.size()) < property_count) {
      fail(ErrorCode::parse, path + ": line " + std::to_string(line_no) + ": short vertex row");
    }
    cloud.points.emplace_back(parse_value(tokens[x_idx], path, line_no),
                              parse_value(tokens[y_idx], path, line_no),
                              parse_value(tokens[z_idx], path, line_no));
  }
  if (cloud.empty()) fail(ErrorCode::parse, path + ": empty point cloud");
  return cloud;
}

}  // namespace

PointCloud load_cloud(const std::string& path, CloudFormat format) {
  if (format == CloudFormat::auto_detect) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply") {
      format = CloudFormat::ply_ascii;
    } else {
      format = CloudFormat::csv_xyz;
    }
  }
  return format == CloudFormat::ply_ascii ? load_ply_ascii(path) : load_csv_xyz(path);
}

void save_cloud_csv(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write '" + path + "'");
  for (const Vec3& p : cloud.points) {
    out << format_double(p.x()) << ',' << format_double(p.y()) << ','
        << format_double(p.z()) << '\n';
  }
}

std::vector<ImuSample> load_imu_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  std::vector<ImuSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = strip(line);
    if (body.empty() || body[0] == '#') continue;
    const auto fields = split(body, ',');
    if (fields.size() != 7) {
      fail(ErrorCode::parse,
           path + ": line " + std::to_string(line_no) + ": expected t,ax,ay,az,gx,gy,gz");
    }
    ImuSample s;
    s.time = parse_value(fields[0], path, line_no);
    for (int i = 0; i < 3; ++i) s.accel[i] = parse_value(fields[1 + i], path, line_no);
    for (int i = 0; i < 3; ++i) s.gyro[i] = parse_value(fields[4 + i], path, line_no);
    if (!samples.empty() && s.time <= samples.back().time) {
      fail(ErrorCode::parse,
           path + ": line " + std::to_string(line_no) + ": timestamps must strictly increase");
    }
    samples.push_back(s);
  }
  return samples;
}

void save_imu_csv(const std::vector<ImuSample>& samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write '" + path + "'");
  out << "# t,ax,ay,az,gx,gy,gz\n";
  for (const ImuSample& s : samples) {
    out << format_double(s.time);
    for (int i = 0; i < 3; ++i) out << ',' << format_double(s.accel[i]);
    for (int i = 0; i < 3; ++i) out << ',' << format_double(s.gyro[i]);
    out << '\n';
  }
}

std::string format_tum_line(double time, const Pose& pose) {
  Eigen::Quaterniond q(pose.rotation);
  q.normalize();
  if (q.w() < 0.0 ||
      (q.w() == 0.0 && (q.x() < 0.0 || (q.x() == 0.0 && (q.y() < 0.0 || (q.y() == 0.0 && q.z() < 0.0)))))) {
    q.coeffs() = -q.coeffs();
  }
  std::string line = format_double(time);
  for (int i = 0; i < 3; ++i) line += " " + format_double(pose.translation[i]);
  line += " " + format_double(q.x());
  line += " " + format_double(q.y());
  line += " " + format_double(q.z());
  line += " " + format_double(q.w());
  return line;
}

void save_trajectory_tum(const std::vector<StampedPose>& trajectory, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write '" + path + "'");
  for (const StampedPose& sp : trajectory) {
    out << format_tum_line(sp.time, sp.pose) << '\n';
  }
}

std::vector<StampedPose> load_trajectory_tum(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  std::vector<StampedPose> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = strip(line);
    if (body.empty() || body[0] == '#') continue;
    const auto tokens = split_ws(body);
    if (tokens.size() != 8) {
      fail(ErrorCode::parse, path + ": line " + std::to_string(line_no) + ": expected 8 fields");
    }
    StampedPose sp;
    sp.time = parse_value(tokens[0], path, line_no);
    for (int i = 0; i < 3; ++i) sp.pose.translation[i] = parse_value(tokens[1 + i], path, line_no);
    Eigen::Quaterniond q(parse_value(tokens[7], path, line_no),
                         parse_value(tokens[4], path, line_no),
                         parse_value(tokens[5], path, line_no),
                         parse_value(tokens[6], path, line_no));
    q.normalize();
    sp.pose.rotation = q.toRotationMatrix();
    out.push_back(sp);
  }
  return out;
}

void save_covariances_csv(const std::vector<double>& times, const std::vector<Mat6>& covariances,
                          const std::string& path) {
  if (times.size() != covariances.size()) {
    fail(ErrorCode::invalid_argument, "times/covariances size mismatch");
  }
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write '" + path + "'");
  out << "# t,cov row-major 6x6 ([rot; trans] block order)\n";
  for (std::size_t i = 0; i < times.size(); ++i) {
    out << format_double(times[i]);
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) out << ',' << format_double(covariances[i](r, c));
    }
    out << '\n';
  }
}

}  // namespace steinscan
