#include <algorithm>
#include <filesystem>

#include "uad/volume.hpp"

namespace uad {

std::vector<Volume> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory '" + dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".uadv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Volume> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_volume(f.string()));
  return out;
}

void save_dataset(const std::vector<Volume>& volumes, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& v : volumes) write_volume(v, (std::filesystem::path(dir) / (v.id + ".uadv")).string());
}

}  // namespace uad
