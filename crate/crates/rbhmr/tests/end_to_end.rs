//! Offline and online stages on a coarse TC1 discretization.

use rbhmr::archive::BasisArchive;
use rbhmr::mesh::{build_interval_mesh, FESpace2D, TensorMesh2D};
use rbhmr::model::TestCase;
use rbhmr::reduced::{reconstruct, JacobianMode};
use rbhmr::reference::{error_norms, ReferenceSolver};
use rbhmr::training::{build_spaces, uniform_training, Manifolds, ParameterBox, ReducedSpaces, SpaceSettings};
use rbhmr::transverse::TransverseContext;

struct Fixture {
    case: TestCase,
    ctx: TransverseContext,
    spaces: ReducedSpaces,
    space: FESpace2D,
    settings: SpaceSettings,
}

fn fixture() -> Fixture {
    let case = TestCase::tc1();
    let mesh_y = build_interval_mesh(case.y0, case.y1, 20).unwrap();
    let ctx = TransverseContext::new(case.clone(), mesh_y.clone()).unwrap();
    let pbox = ParameterBox {
        x_breaks: vec![0.0, 0.5, 1.0, 1.5, 2.0],
        u_range: (-0.5, 0.5),
        du_range: (-1.0, 1.0),
    };
    let samples = uniform_training(&ctx, &pbox, 1, 150, 7).unwrap();
    let manifolds = Manifolds::from_samples(&samples).unwrap();
    let settings = SpaceSettings::default();
    let spaces = build_spaces(&ctx, &manifolds, &settings).unwrap();
    let space = FESpace2D::new(TensorMesh2D {
        mesh_x: build_interval_mesh(case.x0, case.x1, 40).unwrap(),
        mesh_y,
    })
    .unwrap();
    Fixture { case, ctx, spaces, space, settings }
}

fn reduced_field(f: &Fixture, spaces: &ReducedSpaces, m: usize) -> Vec<f64> {
    let solver = spaces.solver(&f.ctx, f.space.mesh.mesh_x.clone(), m, None, JacobianMode::Consistent).unwrap();
    let sol = solver.solve().unwrap();
    reconstruct(&sol, &solver.basis, &f.space).unwrap()
}

#[test]
fn model_error_drops_with_modes() {
    let f = fixture();
    let reference = ReferenceSolver::new(f.case.clone(), f.space.clone()).solve().unwrap();
    let errs: Vec<f64> = (1..=3)
        .map(|m| error_norms(&f.space, &reference.values, &reduced_field(&f, &f.spaces, m)).unwrap().0)
        .collect();
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    assert!(errs[2] < 0.05, "{errs:?}");
}

#[test]
fn archived_spaces_reproduce_the_online_solve() {
    let f = fixture();
    let archive = BasisArchive {
        case: f.case.clone(),
        mesh_y: f.ctx.mesh().clone(),
        seed: 7,
        q: 1,
        n_train: 150,
        settings: f.settings.clone(),
        spaces: f.spaces.clone(),
    };
    let path = std::env::temp_dir().join(format!("rbhmr-end-to-end-{}.hmr", std::process::id()));
    archive.save(&path).unwrap();
    let loaded = BasisArchive::load(&path);
    std::fs::remove_file(&path).unwrap();
    let loaded = loaded.unwrap();
    assert_eq!(loaded.n_train, 150);
    for m in [1, 3] {
        let a = reduced_field(&f, &f.spaces, m);
        let b = reduced_field(&f, &loaded.spaces, m);
        let gap = a.iter().zip(&b).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        assert!(gap < 1e-12, "m={m}: {gap}");
    }
}
