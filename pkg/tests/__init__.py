# ChordSim Test Package
