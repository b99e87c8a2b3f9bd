#include "rlqe/episode_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace rlqe {

static_assert(std::endian::native == std::endian::little, "binary episode format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'L', 'Q', 'E', '-', 'E', 'P', '\0'};

void rebuild_noise(EpisodeData& ep)
{
    const auto& model = ep.model;
    const int T = ep.T();
    ep.w_star = MatrixXd::Zero(T, model.d());
    for (int i = 1; i < T; ++i)
        ep.w_star.row(i) = ep.x_star.row(i) - (model.A * row_vec(ep.x_star, i - 1)).transpose();
    ep.v_star = ep.y_star - ep.x_star * model.B.transpose();
}

template <typename T>
void put(std::ofstream& out, const T& value)
{
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in)
{
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in)
        throw std::runtime_error("episode binary: truncated file");
    return value;
}

void put_matrix(std::ofstream& out, const MatrixXd& M)
{
    for (Index r = 0; r < M.rows(); ++r)
        for (Index c = 0; c < M.cols(); ++c)
            put(out, M(r, c));
}

MatrixXd get_matrix(std::ifstream& in, Index rows, Index cols)
{
    MatrixXd M(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c)
            M(r, c) = get<double>(in);
    return M;
}

}  // namespace

json matrix_to_json(const MatrixXd& M)
{
    json rows = json::array();
    for (Index r = 0; r < M.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < M.cols(); ++c)
            row.push_back(M(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

MatrixXd matrix_from_json(const json& j)
{
    if (!j.is_array())
        throw std::invalid_argument("matrix_from_json: expected array of rows");
    const Index rows = static_cast<Index>(j.size());
    if (rows == 0)
        return MatrixXd(0, 0);
    // A flat array is read as a column.
    if (!j[0].is_array()) {
        MatrixXd M(rows, 1);
        for (Index r = 0; r < rows; ++r)
            M(r, 0) = j[static_cast<std::size_t>(r)].get<double>();
        return M;
    }
    const Index cols = static_cast<Index>(j[0].size());
    MatrixXd M(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (static_cast<Index>(row.size()) != cols)
            throw std::invalid_argument("matrix_from_json: ragged rows");
        for (Index c = 0; c < cols; ++c)
            M(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return M;
}

json model_to_json(const SystemModel& model)
{
    return json{{"A", matrix_to_json(model.A)},
                {"B", matrix_to_json(model.B)},
                {"sigma2", model.sigma2},
                {"tau2", model.tau2},
                {"R2", model.R2},
                {"T", model.T}};
}

SystemModel model_from_json(const json& j)
{
    SystemModel model;
    model.A = matrix_from_json(j.at("A"));
    model.B = matrix_from_json(j.at("B"));
    model.sigma2 = j.value("sigma2", 1.0);
    model.tau2 = j.value("tau2", 1.0);
    model.R2 = j.value("R2", 1.0);
    model.T = j.value("T", 1);
    model.validate();
    return model;
}

json episode_to_json(const EpisodeData& ep)
{
    json mask = json::array();
    for (auto a : ep.a_star)
        mask.push_back(static_cast<int>(a));
    return json{{"model", model_to_json(ep.model)},
                {"seed", ep.seed},
                {"x_star", matrix_to_json(ep.x_star)},
                {"y_star", matrix_to_json(ep.y_star)},
                {"a_star", mask},
                {"y", matrix_to_json(ep.y)}};
}

EpisodeData episode_from_json(const json& j)
{
    EpisodeData ep;
    ep.model = model_from_json(j.at("model"));
    ep.seed = j.value("seed", std::uint64_t{0});
    ep.x_star = matrix_from_json(j.at("x_star"));
    ep.y_star = matrix_from_json(j.at("y_star"));
    ep.y = matrix_from_json(j.at("y"));
    for (const auto& a : j.at("a_star"))
        ep.a_star.push_back(static_cast<std::uint8_t>(a.get<int>() != 0));
    const int T = ep.model.T;
    if (ep.x_star.rows() != T || ep.y_star.rows() != T || ep.y.rows() != T ||
        static_cast<int>(ep.a_star.size()) != T)
        throw std::invalid_argument("episode_from_json: sequence lengths disagree with model.T");
    rebuild_noise(ep);
    return ep;
}

json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    return json::parse(in);
}

void write_json_file(const json& j, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

void save_episode_json(const EpisodeData& ep, const std::string& path)
{
    write_json_file(episode_to_json(ep), path);
}

EpisodeData load_episode_json(const std::string& path)
{
    return episode_from_json(read_json_file(path));
}

void save_episode_binary(const EpisodeData& ep, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kEpisodeBinaryVersion);
    put<std::uint32_t>(out, 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ep.T()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ep.model.d()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ep.model.m()));
    put<std::uint32_t>(out, 0);
    put<std::uint64_t>(out, ep.seed);
    put(out, ep.model.sigma2);
    put(out, ep.model.tau2);
    put(out, ep.model.R2);
    put_matrix(out, ep.model.A);
    put_matrix(out, ep.model.B);
    put_matrix(out, ep.x_star);
    put_matrix(out, ep.y_star);
    for (auto a : ep.a_star)
        put<double>(out, a ? 1.0 : 0.0);
    put_matrix(out, ep.y);
}

EpisodeData load_episode_binary(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("episode binary: bad magic");
    const auto version = get<std::uint32_t>(in);
    if (version != kEpisodeBinaryVersion)
        throw std::runtime_error("episode binary: unsupported version");
    (void)get<std::uint32_t>(in);
    const auto T = static_cast<Index>(get<std::uint32_t>(in));
    const auto d = static_cast<Index>(get<std::uint32_t>(in));
    const auto m = static_cast<Index>(get<std::uint32_t>(in));
    (void)get<std::uint32_t>(in);

    EpisodeData ep;
    ep.seed = get<std::uint64_t>(in);
    ep.model.sigma2 = get<double>(in);
    ep.model.tau2 = get<double>(in);
    ep.model.R2 = get<double>(in);
    ep.model.T = static_cast<int>(T);
    ep.model.A = get_matrix(in, d, d);
    ep.model.B = get_matrix(in, m, d);
    ep.model.validate();
    ep.x_star = get_matrix(in, T, d);
    ep.y_star = get_matrix(in, T, m);
    for (Index i = 0; i < T; ++i)
        ep.a_star.push_back(static_cast<std::uint8_t>(get<double>(in) != 0.0));
    ep.y = get_matrix(in, T, m);
    rebuild_noise(ep);
    return ep;
}

EpisodeData load_episode(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    char magic[8] = {};
    in.read(magic, sizeof(magic));
    if (in && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0)
        return load_episode_binary(path);
    return load_episode_json(path);
}

}  // namespace rlqe
