namespace jlab {
}
