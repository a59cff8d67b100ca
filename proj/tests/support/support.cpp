#include "support.hpp"

#include "kcforge/io.hpp"

#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <sys/wait.h>
#include <unistd.h>

namespace kcforge::testing {

namespace fs = std::filesystem;

fs::path data_dir() { return KCFORGE_DATA_DIR; }

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("kcforge-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + std::to_string(rd()));
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

double bigram_logprob_formula(const std::string& training, const std::string& context,
                              const std::string& continuation) {
    std::map<std::pair<int, int>, double> pair;
    std::map<int, double> row;
    for (std::size_t i = 1; i < training.size(); ++i) {
        int a = static_cast<unsigned char>(training[i - 1]);
        int b = static_cast<unsigned char>(training[i]);
        pair[{a, b}] += 1;
        row[a] += 1;
    }
    int prev = context.empty() ? 256 : static_cast<unsigned char>(context.back());
    double total = 0.0;
    for (char c : continuation) {
        int b = static_cast<unsigned char>(c);
        total += std::log((pair[{prev, b}] + 1.0) / (row[prev] + 257.0));
        prev = b;
    }
    return total;
}

QuestionBank bank_from_stems(const std::vector<std::string>& stems, const std::string& prefix) {
    std::vector<Question> qs;
    for (std::size_t i = 0; i < stems.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "%s%02zu", prefix.c_str(), i);
        qs.push_back({id, stems[i], {}, {}});
    }
    return QuestionBank(std::move(qs));
}

std::string random_text(std::mt19937_64& rng, std::size_t max_len, const std::string& alphabet) {
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::string out(len(rng), ' ');
    for (auto& c : out) {
        if (alphabet.empty()) c = static_cast<char>(rng() % 256);
        else c = alphabet[rng() % alphabet.size()];
    }
    return out;
}

// ─── Clustering ───────────────────────────────────────────────

std::vector<NaiveMerge> naive_upgma(const DistanceMatrix& d) {
    const auto& ids = d.ids();
    std::vector<std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < d.size(); ++i) clusters.push_back({i});
    auto min_id = [&](const std::vector<std::size_t>& c) {
        std::string best = ids[c.front()];
        for (auto i : c) best = std::min(best, ids[i]);
        return best;
    };
    std::vector<NaiveMerge> out;
    while (clusters.size() > 1) {
        std::size_t bx = 0, by = 0;
        double best = 0;
        std::pair<std::string, std::string> best_key;
        bool found = false;
        for (std::size_t x = 0; x < clusters.size(); ++x) {
            for (std::size_t y = x + 1; y < clusters.size(); ++y) {
                double sum = 0;
                for (auto i : clusters[x])
                    for (auto j : clusters[y]) sum += d.at(i, j);
                double avg = sum / static_cast<double>(clusters[x].size() * clusters[y].size());
                auto a = min_id(clusters[x]), b = min_id(clusters[y]);
                auto key = a < b ? std::pair(a, b) : std::pair(b, a);
                if (!found || avg < best || (avg == best && key < best_key)) {
                    found = true;
                    best = avg;
                    best_key = key;
                    bx = x;
                    by = y;
                }
            }
        }
        if (min_id(clusters[bx]) > min_id(clusters[by])) std::swap(bx, by);
        NaiveMerge m{clusters[bx], clusters[by], best};
        std::sort(m.left.begin(), m.left.end());
        std::sort(m.right.begin(), m.right.end());
        out.push_back(m);
        auto merged = clusters[bx];
        merged.insert(merged.end(), clusters[by].begin(), clusters[by].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(std::max(bx, by)));
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(std::min(bx, by)));
        clusters.push_back(merged);
    }
    return out;
}

std::vector<NaiveMerge> merges_as_sets(const Dendrogram& dend) {
    const std::size_t n = dend.leaves.size();
    std::vector<std::vector<std::size_t>> members(2 * n);
    for (std::size_t i = 0; i < n; ++i) members[i] = {i};
    std::vector<NaiveMerge> out;
    for (const auto& m : dend.merges) {
        NaiveMerge nm{members[static_cast<std::size_t>(m.a)], members[static_cast<std::size_t>(m.b)], m.height};
        std::sort(nm.left.begin(), nm.left.end());
        std::sort(nm.right.begin(), nm.right.end());
        auto& merged = members[static_cast<std::size_t>(m.new_id)];
        merged = nm.left;
        merged.insert(merged.end(), nm.right.begin(), nm.right.end());
        out.push_back(std::move(nm));
    }
    return out;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("ARI: size mismatch");
    std::map<std::pair<int, int>, double> table;
    std::map<int, double> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[{a[i], b[i]}] += 1;
        ra[a[i]] += 1;
        rb[b[i]] += 1;
    }
    auto c2 = [](double x) { return x * (x - 1) / 2; };
    double index = 0, sa = 0, sb = 0;
    for (auto& [_, v] : table) index += c2(v);
    for (auto& [_, v] : ra) sa += c2(v);
    for (auto& [_, v] : rb) sb += c2(v);
    const double expected = sa * sb / c2(static_cast<double>(a.size()));
    const double max_index = (sa + sb) / 2;
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

DistanceMatrix planted_blocks(const std::vector<std::size_t>& block_sizes, double within, double across,
                              std::vector<int>* truth, const std::string& prefix) {
    std::vector<int> block;
    for (std::size_t b = 0; b < block_sizes.size(); ++b)
        for (std::size_t i = 0; i < block_sizes[b]; ++i) block.push_back(static_cast<int>(b));
    const std::size_t n = block.size();
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "%s%02zu", prefix.c_str(), i);
        ids.push_back(id);
    }
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) v[i * n + j] = block[i] == block[j] ? within : across;
    if (truth) *truth = block;
    return DistanceMatrix(ids, v);
}

DistanceMatrix random_distances(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("r" + std::to_string(i));
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) v[i * n + j] = v[j * n + i] = u(rng);
    return DistanceMatrix(ids, v);
}

// ─── AFM ──────────────────────────────────────────────────────

RandomAfmInstance random_afm_instance(std::mt19937_64& rng, std::size_t max_students, std::size_t max_kcs,
                                      std::size_t max_rows) {
    std::uniform_int_distribution<std::size_t> ns(1, max_students), nk(1, max_kcs), nr(1, max_rows);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    RandomAfmInstance inst;
    const std::size_t S = ns(rng), K = nk(rng), R = nr(rng);
    for (std::size_t s = 0; s < S; ++s) inst.data.students.push_back("s" + std::to_string(s));
    for (std::size_t k = 0; k < K; ++k) inst.data.kc_labels.push_back("k" + std::to_string(k));
    for (std::size_t r = 0; r < R; ++r) {
        AfmRow row;
        row.student = rng() % S;
        std::vector<std::size_t> ks(K);
        std::iota(ks.begin(), ks.end(), 0);
        for (std::size_t i = K; i > 1; --i) std::swap(ks[i - 1], ks[rng() % i]);
        ks.resize(1 + rng() % std::min<std::size_t>(K, 3));
        std::sort(ks.begin(), ks.end());
        for (auto k : ks) row.features.push_back({k, static_cast<std::int64_t>(rng() % 11)});
        row.y = static_cast<int>(rng() % 2);
        inst.data.rows.push_back(std::move(row));
    }
    inst.params = AFMParams::zeros(S, K);
    for (auto& t : inst.params.theta) t = u(rng);
    for (auto& b : inst.params.beta) b = u(rng);
    for (auto& g : inst.params.gamma) g = 0.25 * (u(rng) + 1.0);
    return inst;
}

double gradient_check(const AFMParams& p, const AfmData& data, double lambda, double step) {
    const auto analytic = nll_and_gradient(p, data.rows, lambda).gradient;
    auto f = [&](const AFMParams& q) { return nll_and_gradient(q, data.rows, lambda).value; };
    double worst = 0.0;
    auto check = [&](std::vector<double> AFMParams::*field, const std::vector<double>& grad) {
        for (std::size_t i = 0; i < (p.*field).size(); ++i) {
            AFMParams plus = p, minus = p;
            (plus.*field)[i] += step;
            (minus.*field)[i] -= step;
            const double fd = (f(plus) - f(minus)) / (2 * step);
            const double err = std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, err);
        }
    };
    check(&AFMParams::theta, analytic.theta);
    check(&AFMParams::beta, analytic.beta);
    check(&AFMParams::gamma, analytic.gamma);
    return worst;
}

// ─── HTTP ─────────────────────────────────────────────────────

struct TestScoreServer::Impl {
    httplib::Server server;
    std::thread thread;
    int port = 0;
};

TestScoreServer::TestScoreServer(Handler handler) : impl_(std::make_unique<Impl>()) {
    impl_->server.Post("/v1/score", [this, handler](const httplib::Request& req, httplib::Response& res) {
        requests_.fetch_add(1);
        auto reply = handler(req.body);
        res.status = reply.status;
        res.set_content(reply.body, "application/json");
    });
    impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

std::unique_ptr<TestScoreServer> TestScoreServer::wrapping(Scorer& scorer) {
    return std::make_unique<TestScoreServer>([&scorer](const std::string& body) -> Reply {
        auto req = nlohmann::json::parse(body, nullptr, false);
        if (req.is_discarded() || !req.contains("context") || !req.contains("continuation"))
            return {400, R"({"error":"bad request"})"};
        auto r = scorer.score({req["context"].get<std::string>(), req["continuation"].get<std::string>()});
        nlohmann::json out{{"logprob", r.logprob}, {"token_count", r.token_count}, {"model_id", r.model_id}};
        return {200, out.dump()};
    });
}

TestScoreServer::~TestScoreServer() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::string TestScoreServer::endpoint() const { return "http://127.0.0.1:" + std::to_string(impl_->port); }

PythonShim::PythonShim(const fs::path& script, const fs::path& corpus) {
    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
    pid_ = ::fork();
    if (pid_ < 0) throw std::runtime_error("fork failed");
    if (pid_ == 0) {
        ::dup2(fds[1], STDOUT_FILENO);
        ::close(fds[0]);
        ::close(fds[1]);
        const std::string s = script.string(), c = corpus.string();
        ::execlp(KCFORGE_PYTHON, KCFORGE_PYTHON, s.c_str(), "--corpus", c.c_str(), "--port", "0",
                 static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(fds[1]);
    std::string line;
    char ch;
    while (::read(fds[0], &ch, 1) == 1 && ch != '\n') line += ch;
    ::close(fds[0]);
    if (line.rfind("PORT ", 0) != 0) {
        ::kill(pid_, SIGTERM);
        ::waitpid(pid_, nullptr, 0);
        throw std::runtime_error("python shim did not start: '" + line + "'");
    }
    port_ = std::stoi(line.substr(5));
}

PythonShim::~PythonShim() {
    if (pid_ > 0) {
        ::kill(pid_, SIGTERM);
        ::waitpid(pid_, nullptr, 0);
    }
}

} // namespace kcforge::testing
