#pragma once

// Model file: a JSON document
//
//   {
//     "schema_version": 1,
//     "d": 3, "p": 2, "R": 2,
//     "family": "hermite",
//     "standardization": [[mean, std], ...],          // d pairs
//     "factors": [[u_00, u_01, ..., u_0(R-1), u_10, ...], ...]   // d matrices, (p+1) x R row-major
//   }
//
// Doubles are written with round-trip precision, so a reload reproduces
// predictions bit for bit.

#include <tensoruq/cptensor.hpp>
#include <tensoruq/errors.hpp>
#include <tensoruq/polybasis.hpp>
#include <tensoruq/surrogate.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace tensoruq::harness {

inline constexpr int kModelSchemaVersion = 1;

inline nlohmann::json model_to_json(const SurrogateModel& m)
{
    const auto& x = m.coeffs();
    nlohmann::json j;
    j["schema_version"] = kModelSchemaVersion;
    j["d"] = x.dims();
    j["p"] = m.basis().max_degree();
    j["R"] = x.rank();
    j["family"] = std::string(to_string(m.basis().kind()));
    auto st = nlohmann::json::array();
    for (const auto& s : m.standardization()) st.push_back({s.mean, s.std});
    j["standardization"] = std::move(st);
    auto factors = nlohmann::json::array();
    for (const auto& u : x.factors()) {
        std::vector<double> row_major;
        row_major.reserve(static_cast<std::size_t>(u.size()));
        for (Eigen::Index i = 0; i < u.rows(); ++i)
            for (Eigen::Index r = 0; r < u.cols(); ++r) row_major.push_back(u(i, r));
        factors.push_back(std::move(row_major));
    }
    j["factors"] = std::move(factors);
    return j;
}

inline SurrogateModel model_from_json(const nlohmann::json& j)
{
    try {
        if (!j.is_object() || !j.contains("schema_version")) throw load_error("model file has no schema_version");
        const int version = j.at("schema_version").get<int>();
        if (version != kModelSchemaVersion)
            throw load_error("unsupported model schema_version " + std::to_string(version));

        const int d = j.at("d").get<int>();
        const int p = j.at("p").get<int>();
        const int rank = j.at("R").get<int>();
        if (d < 1 || p < 0 || rank < 1) throw load_error("model file has invalid d/p/R");
        const BasisFamily basis(family_from_string(j.at("family").get<std::string>()), p);

        const auto& st = j.at("standardization");
        if (!st.is_array() || static_cast<int>(st.size()) != d) throw load_error("standardization must have d pairs");
        std::vector<Standardization> standardization;
        for (const auto& pair : st) {
            if (!pair.is_array() || pair.size() != 2) throw load_error("standardization entries must be [mean, std]");
            standardization.push_back({pair[0].get<double>(), pair[1].get<double>()});
        }

        const auto& fj = j.at("factors");
        if (!fj.is_array() || static_cast<int>(fj.size()) != d) throw load_error("factors must have d matrices");
        std::vector<Eigen::MatrixXd> factors;
        for (const auto& entry : fj) {
            const auto values = entry.get<std::vector<double>>();
            if (static_cast<long long>(values.size()) != static_cast<long long>(p + 1) * rank)
                throw load_error("factor matrix has wrong number of entries");
            Eigen::MatrixXd u(p + 1, rank);
            for (int i = 0; i <= p; ++i)
                for (int r = 0; r < rank; ++r) u(i, r) = values[static_cast<std::size_t>(i * rank + r)];
            factors.push_back(std::move(u));
        }
        return SurrogateModel(CPTensor(std::move(factors)), basis, std::move(standardization));
    } catch (const load_error&) {
        throw;
    } catch (const std::exception& e) {
        throw load_error(std::string("invalid model file: ") + e.what());
    }
}

inline void persist_model(const SurrogateModel& m, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << model_to_json(m).dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline SurrogateModel load_model(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw load_error("cannot open model file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::exception& e) {
        throw load_error("model file " + path.string() + " is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

} // namespace tensoruq::harness
