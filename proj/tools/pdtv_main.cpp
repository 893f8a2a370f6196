#include "pdtv/harness.hpp"

int main(int argc, char** argv) { return pdtv::cli_main(argc, argv); }
