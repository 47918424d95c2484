# Reference paths, Frenet projection and vehicle/lane shapes
