#include "semclip/config.hpp"

int main(int argc, char** argv) { return semclip::config::run_cli(argc, argv); }
