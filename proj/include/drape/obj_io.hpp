#pragma once

// ASCII OBJ round-tripping. Only v/f records matter; normals, texture
// coordinates and grouping statements are skipped. Faces must be triangles
// and indices are 1-based on disk.

#include "drape/common.hpp"
#include "drape/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace drape {

inline TriMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(msg("cannot open OBJ file '", path, "'"));

    TriMesh mesh;
    std::vector<long> face_lines;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue; // blank
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z()))
                throw IoError(msg(path, ":", lineno, ": malformed vertex record"));
            mesh.vertices.push_back(p);
        } else if (tag == "f") {
            std::array<int, 3> corners{};
            std::string item;
            int count = 0;
            while (ls >> item) {
                // accept "i", "i/t", "i//n", "i/t/n"; keep the vertex index
                const auto slash = item.find('/');
                const std::string head = slash == std::string::npos ? item : item.substr(0, slash);
                int idx = 0;
                try {
                    idx = std::stoi(head);
                } catch (const std::exception&) {
                    throw IoError(msg(path, ":", lineno, ": malformed face index '", item, "'"));
                }
                if (idx <= 0)
                    throw IoError(msg(path, ":", lineno,
                                      ": unsupported non-positive face index ", idx));
                if (count < 3) corners[count] = idx - 1;
                ++count;
            }
            if (count != 3)
                throw IoError(msg(path, ":", lineno, ": non-triangle face at line ", lineno,
                                  " (", count, " corners)"));
            mesh.faces.push_back(corners);
            face_lines.push_back(lineno);
        }
        // vn/vt/g/o/s/usemtl/mtllib/# are ignored
    }

    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        for (int k = 0; k < 3; ++k) {
            const int idx = mesh.faces[f][k];
            if (idx < 0 || idx >= mesh.vertex_count())
                throw IoError(msg(path, ":", face_lines[f], ": face index ", idx + 1,
                                  " out of range (", mesh.vertex_count(), " vertices)"));
        }
    }
    return mesh;
}

inline void save_obj(const TriMesh& mesh, const std::string& path) {
    std::FILE* out = std::fopen(path.c_str(), "wb");
    if (!out) throw IoError(msg("cannot open '", path, "' for writing"));
    for (const auto& p : mesh.vertices)
        std::fprintf(out, "v %.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    for (const auto& f : mesh.faces)
        std::fprintf(out, "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
    if (std::fclose(out) != 0) throw IoError(msg("write failure on '", path, "'"));
}

} // namespace drape
