"""Annulus meshing, curved refinement, and MSH/VTK round trips.

The geometry used throughout is a box with a circular hole.  The initial
mesh is graded between the circle and the box; uniform refinement can
snap the newly created midpoints back onto the true circle so that the
boundary stays curved at every level.
"""

import numpy as np

from morphopt.mesh import (Circle, generate_annulus, parse_msh,
                           uniform_refine, write_msh, write_vtk)

circle = Circle((0.0, 0.0), 0.5)
box = ((-1.0, -1.0), (1.0, 1.0))
mesh = generate_annulus(circle.center, circle.radius, box, n_theta=16, n_r=4)
print("base mesh: %d nodes, %d cells, tags %s"
      % (mesh.num_nodes, mesh.num_cells, sorted(map(str, mesh.tags))))

# Refine twice.  Snapping keeps the inner boundary on the circle; the
# polygonal hole stays inscribed in it, so the mesh area exceeds the
# exact annulus area by a margin that shrinks quadratically.
exact = 4.0 - np.pi * circle.radius ** 2
for level in range(1, 3):
    mesh = uniform_refine(mesh, {"inner": circle})
    print("level %d: %6d cells, area excess %.3e"
          % (level, mesh.num_cells, mesh.area() - exact))

# The MSH text format round-trips exactly: same nodes, cells and tags.
back = parse_msh(write_msh(mesh))
assert np.array_equal(back.nodes, mesh.nodes)
assert np.array_equal(back.cells, mesh.cells)
print("msh round trip exact for %d nodes" % back.num_nodes)

# VTK output is for viewers; any point data rides along.
write_vtk("mesh_demo.vtk", mesh,
          point_data={"radius": np.hypot(*mesh.nodes.T)})
print("wrote mesh_demo.vtk")
