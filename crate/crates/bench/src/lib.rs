//! Shared fixtures for the solver benchmarks.

use breakfvm::{BreakageKernel, CollisionKernel, Mesh, SchemeTables, State};

pub struct Fixture {
    pub mesh: Mesh,
    pub collision: CollisionKernel,
    pub breakage: BreakageKernel,
    pub tables: SchemeTables,
    pub state: State,
}

pub fn fixture(cells: usize) -> Fixture {
    let mesh = Mesh::geometric(1.0, cells, 1.05).unwrap();
    let collision = CollisionKernel::new(1.0, 0.6, 0.9).unwrap();
    let breakage = BreakageKernel::power_conserving(-0.5).unwrap();
    let tables = SchemeTables::build(&mesh, &collision, &breakage).unwrap();
    let c = (0..cells)
        .map(|i| 1.0 + 0.5 * ((i * 37 % 11) as f64 / 11.0))
        .collect();
    Fixture {
        mesh,
        collision,
        breakage,
        tables,
        state: State::initial(c),
    }
}
