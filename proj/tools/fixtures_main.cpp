// genonet-fixtures: regenerates the scripted cassettes, broken-build stub
// fixtures and aliases.tsv from the demo model. Output is deterministic, so
// rerunning it on an unchanged tree leaves the committed files untouched.

#include "demo.hpp"

#include "genonet/text.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"Regenerate genonet replay cassettes and stub fixtures"};
    std::string data = genonet::data_dir().string();
    std::string out;
    app.add_option("--data", data, "data directory holding corpus/ and the hand-written stub fixtures");
    app.add_option("--out", out, "output directory (default: the data directory)");
    CLI11_PARSE(app, argc, argv);
    if (out.empty()) out = data;

    try {
        for (const auto& f : genonet::demo::generate(data, out)) std::cout << (std::filesystem::path(out) / f).string() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "genonet-fixtures: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
