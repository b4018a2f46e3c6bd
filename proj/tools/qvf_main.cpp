#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qvf/cli.hpp"

int main(int argc, char **argv) {
    if (const char *threads = std::getenv("QVF_THREADS")) {
        Eigen::setNbThreads(std::atoi(threads));
    }
    const std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty() || args[0] == "--help" || args[0] == "-h") {
        std::cerr << "usage: qvf <train|render|eval|variance|shots|noise|inpaint|complete|interpolate> "
                     "[--config file.json] [--key value ...]\n";
        return args.empty() ? 2 : 0;
    }
    return qvf::cli::main_entry(args, std::cout, std::cerr);
}
