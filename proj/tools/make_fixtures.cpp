// Writes the synthetic wage-panel and maintenance CSVs used by the demos.
#include "epdic/io.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>

int main(int argc, char** argv)
{
    const std::filesystem::path dir = argc > 1 ? argv[1] : "data";
    const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;
    std::filesystem::create_directories(dir);
    epdic::write_synthetic_wages((dir / "wages.csv").string(), seed);
    epdic::write_synthetic_ai4i((dir / "ai4i.csv").string(), seed);
    std::cout << (dir / "wages.csv").string() << "\n" << (dir / "ai4i.csv").string() << "\n";
}
