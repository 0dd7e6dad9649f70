#include "manifest.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "error.hpp"
#include "parallel.hpp"
#include "pngio.hpp"

namespace fs = std::filesystem;

namespace clusdiff {

std::vector<std::string> Manifest::class_table() const {
  std::vector<std::string> table;
  for (const ManifestRecord& r : records)
    if (std::find(table.begin(), table.end(), r.class_name) == table.end())
      table.push_back(r.class_name);
  return table;
}

std::vector<int> Manifest::class_ids(const std::vector<std::string>& table) const {
  std::vector<int> ids;
  ids.reserve(records.size());
  for (const ManifestRecord& r : records) {
    auto it = std::find(table.begin(), table.end(), r.class_name);
    if (it == table.end())
      fail(ErrorKind::Vocabulary, "class \"" + r.class_name + "\" is not in the table");
    ids.push_back(int(it - table.begin()));
  }
  return ids;
}

namespace {

void check_token(const std::string& s, const char* what) {
  if (s.empty()) fail(ErrorKind::Data, std::string("empty ") + what + " in manifest record");
  for (char c : s)
    if (std::isspace(static_cast<unsigned char>(c)))
      fail(ErrorKind::Data, std::string(what) + " \"" + s + "\" contains whitespace");
}

}  // namespace

void save_manifest(const std::string& path, const Manifest& m) {
  if (m.channels < 1 || m.height < 1 || m.width < 1)
    fail(ErrorKind::Data, "manifest extents must be positive");
  std::set<int> ids;
  std::ostringstream os;
  os << "CDMF1\n";
  os << "channels " << m.channels << "\n";
  os << "height " << m.height << "\n";
  os << "width " << m.width << "\n";
  os << "samples " << m.records.size() << "\n";
  for (const ManifestRecord& r : m.records) {
    if (!ids.insert(r.id).second)
      fail(ErrorKind::Data, "duplicate sample id " + std::to_string(r.id));
    check_token(r.rel_path, "path");
    check_token(r.class_name, "class name");
    os << r.id << " " << r.rel_path << " " << r.class_name << " ";
    if (r.mode_id >= 0)
      os << r.mode_id;
    else
      os << "-";
    os << " " << (r.synthetic ? 1 : 0) << "\n";
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  f << os.str();
  if (!f.flush()) fail(ErrorKind::Io, "short write to " + path);
}

Manifest load_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::MissingInput, "no manifest at " + path);
  std::string magic;
  if (!(f >> magic) || magic != "CDMF1") fail(ErrorKind::Io, path + " is not a manifest");
  Manifest m;
  m.root = fs::path(path).parent_path().string();
  if (m.root.empty()) m.root = ".";
  std::string kw;
  size_t n = 0;
  if (!(f >> kw >> m.channels) || kw != "channels" || !(f >> kw >> m.height) || kw != "height" ||
      !(f >> kw >> m.width) || kw != "width" || !(f >> kw >> n) || kw != "samples")
    fail(ErrorKind::Io, path + ": bad manifest header");
  if (m.channels < 1 || m.height < 1 || m.width < 1)
    fail(ErrorKind::Io, path + ": bad extents");
  std::set<int> ids;
  m.records.resize(n);
  for (size_t i = 0; i < n; ++i) {
    ManifestRecord& r = m.records[i];
    std::string mode, synth;
    if (!(f >> r.id >> r.rel_path >> r.class_name >> mode >> synth))
      fail(ErrorKind::Io, path + ": truncated at record " + std::to_string(i));
    if (!ids.insert(r.id).second)
      fail(ErrorKind::Io, path + ": duplicate sample id " + std::to_string(r.id));
    if (mode == "-") {
      r.mode_id = -1;
    } else {
      try {
        r.mode_id = std::stoi(mode);
      } catch (const std::exception&) {
        fail(ErrorKind::Io, path + ": bad mode id \"" + mode + "\"");
      }
      if (r.mode_id < 0) fail(ErrorKind::Io, path + ": bad mode id");
    }
    if (synth == "0")
      r.synthetic = false;
    else if (synth == "1")
      r.synthetic = true;
    else
      fail(ErrorKind::Io, path + ": bad synthetic flag \"" + synth + "\"");
  }
  for (const ManifestRecord& r : m.records) {
    fs::path p = fs::path(m.root) / r.rel_path;
    if (!fs::exists(p))
      fail(ErrorKind::MissingInput, "manifest names a missing image: " + p.string());
  }
  return m;
}

std::vector<Tensor> load_manifest_images(const Manifest& m) {
  std::vector<Tensor> images(m.records.size());
  std::vector<std::string> errors(m.records.size());
  parallel_for(int64_t(m.records.size()), [&](int64_t i) {
    try {
      const fs::path p = fs::path(m.root) / m.records[size_t(i)].rel_path;
      images[size_t(i)] = read_png_gray(p.string());
    } catch (const Error& e) {
      errors[size_t(i)] = e.what();
    }
  });
  for (const std::string& e : errors)
    if (!e.empty()) fail(ErrorKind::Io, e);
  for (size_t i = 0; i < images.size(); ++i) {
    const std::vector<int> want{m.channels, m.height, m.width};
    if (images[i].shape() != want)
      fail(ErrorKind::Data, "image " + m.records[i].rel_path + " is " + images[i].shape_str() +
                                ", manifest says " + shape_to_string(want));
  }
  return images;
}

}  // namespace clusdiff
