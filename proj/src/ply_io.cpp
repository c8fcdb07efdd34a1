#include "subderm/ply_io.hpp"

#include "subderm/errors.hpp"

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace subderm {

namespace {

using File = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

File open_for_write(const std::string& path)
{
    File f(std::fopen(path.c_str(), "w"), &std::fclose);
    if (!f)
        fail(ErrorCode::IoError, "cannot open '" + path + "' for writing");
    return f;
}

void finish(File& f, const std::string& path)
{
    if (std::ferror(f.get()) != 0 || std::fclose(f.release()) != 0)
        fail(ErrorCode::IoError, "write to '" + path + "' failed");
}

}  // namespace

void export_ply(const PointCloud& cloud, const std::string& path)
{
    if (cloud.empty())
        fail(ErrorCode::EmptyCloud, "refusing to write an empty cloud");
    cloud.validate();

    File f = open_for_write(path);
    std::fprintf(f.get(), "ply\nformat ascii 1.0\nelement vertex %zu\n", cloud.size());
    std::fputs("property float x\nproperty float y\nproperty float z\n", f.get());
    if (cloud.has_normals())
        std::fputs("property float nx\nproperty float ny\nproperty float nz\n", f.get());
    std::fputs("end_header\n", f.get());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        if (cloud.has_normals()) {
            const Vec3& n = cloud.normals[i];
            std::fprintf(f.get(), "%.6g %.6g %.6g %.6g %.6g %.6g\n", p.x(), p.y(), p.z(), n.x(),
                         n.y(), n.z());
        } else {
            std::fprintf(f.get(), "%.6g %.6g %.6g\n", p.x(), p.y(), p.z());
        }
    }
    finish(f, path);
}

void export_mesh_ply(const SurfaceMesh& mesh, const std::string& path)
{
    if (mesh.vertices.empty())
        fail(ErrorCode::EmptyCloud, "refusing to write an empty mesh");
    const bool normals = mesh.vertex_normals.size() == mesh.vertices.size();

    File f = open_for_write(path);
    std::fprintf(f.get(), "ply\nformat ascii 1.0\nelement vertex %zu\n", mesh.vertices.size());
    std::fputs("property float x\nproperty float y\nproperty float z\n", f.get());
    if (normals)
        std::fputs("property float nx\nproperty float ny\nproperty float nz\n", f.get());
    std::fprintf(f.get(), "element face %zu\nproperty list uchar int vertex_indices\nend_header\n",
                 mesh.triangles.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3& p = mesh.vertices[i];
        std::fprintf(f.get(), "%.6g %.6g %.6g", p.x(), p.y(), p.z());
        if (normals) {
            const Vec3& n = mesh.vertex_normals[i];
            std::fprintf(f.get(), " %.6g %.6g %.6g", n.x(), n.y(), n.z());
        }
        std::fputc('\n', f.get());
    }
    for (const auto& t : mesh.triangles)
        std::fprintf(f.get(), "3 %d %d %d\n", t[0], t[1], t[2]);
    finish(f, path);
}

PointCloud load_ply(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorCode::IoError, "cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0)
        fail(ErrorCode::IoError, "'" + path + "' is not a PLY file");

    std::size_t n_vertex = 0;
    std::vector<std::string> props;
    bool in_vertex = false;
    bool ascii = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            ascii = fmt == "ascii";
        } else if (word == "element") {
            std::string name;
            std::size_t count = 0;
            ls >> name >> count;
            in_vertex = name == "vertex";
            if (in_vertex)
                n_vertex = count;
        } else if (word == "property" && in_vertex) {
            std::string type, name;
            ls >> type >> name;
            if (type == "list")
                fail(ErrorCode::IoError, "list properties on vertices are not supported");
            props.push_back(name);
        } else if (word == "end_header") {
            break;
        }
    }
    if (!ascii)
        fail(ErrorCode::IoError, "only ASCII PLY is supported");

    auto index_of = [&](const char* name) {
        for (std::size_t i = 0; i < props.size(); ++i) {
            if (props[i] == name)
                return static_cast<int>(i);
        }
        return -1;
    };
    const int ix = index_of("x"), iy = index_of("y"), iz = index_of("z");
    const int inx = index_of("nx"), iny = index_of("ny"), inz = index_of("nz");
    if (ix < 0 || iy < 0 || iz < 0)
        fail(ErrorCode::IoError, "vertex element lacks x/y/z");
    const bool normals = inx >= 0 && iny >= 0 && inz >= 0;

    PointCloud cloud;
    cloud.points.reserve(n_vertex);
    std::vector<double> vals(props.size());
    for (std::size_t i = 0; i < n_vertex; ++i) {
        if (!std::getline(in, line))
            fail(ErrorCode::IoError, "'" + path + "' ends before all vertices were read");
        std::istringstream ls(line);
        for (auto& v : vals) {
            if (!(ls >> v))
                fail(ErrorCode::IoError, "malformed vertex line " + std::to_string(i));
        }
        cloud.points.emplace_back(vals[ix], vals[iy], vals[iz]);
        if (normals) {
            Vec3 n(vals[inx], vals[iny], vals[inz]);
            const double len = n.norm();
            cloud.normals.push_back(len > 0.0 ? Vec3(n / len) : Vec3::UnitZ());
        }
    }
    return cloud;
}

}  // namespace subderm
