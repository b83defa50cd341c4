#include "cpat/data.hpp"

#include <fstream>

namespace cpat::data {

std::vector<ImageRGB> load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError(cat("cannot open manifest '", path, "'"));
    std::vector<ImageRGB> images;
    std::string line;
    while (std::getline(f, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
            line.pop_back();
        size_t start = 0;
        while (start < line.size() && (line[start] == ' ' || line[start] == '\t')) ++start;
        line.erase(0, start);
        if (line.empty()) continue;
        images.push_back(load_png(line));
    }
    if (images.empty()) throw DataError(cat("manifest '", path, "' lists no images"));
    return images;
}

} // namespace cpat::data
