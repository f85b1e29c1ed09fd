use mlmc::io::{read_image, read_kernel_text, write_image, write_kernel_image, write_kernel_text, RunManifest};
use mlmc::kernel::{motion_kernel, kernel_side};
use mlmc::scene::synthetic_scene;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mlmc::Result<()> {
    let dir = std::env::temp_dir().join("mlmc-files-example");
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    let img = synthetic_scene(&mut rng, 48, 64, 3)?;
    let k = motion_kernel(&mut rng, kernel_side(3), 20)?;

    let mut manifest = RunManifest {
        command: "files-example".into(),
        seed: 2,
        ..RunManifest::default()
    };
    for name in ["scene.png", "scene.ppm", "scene.pgm"] {
        let path = dir.join(name);
        write_image(&path, &img)?;
        let back = read_image(&path)?;
        println!("{name:<10} {:?}", back.dims());
        manifest.outputs.insert(name.into(), path);
    }
    write_kernel_text(&dir.join("kernel.txt"), &k)?;
    write_kernel_image(&dir.join("kernel.png"), &k, 8)?;
    assert_eq!(read_kernel_text(&dir.join("kernel.txt"))?, k);
    manifest.outputs.insert("kernel".into(), dir.join("kernel.txt"));
    manifest.metrics.insert("kernel_max".into(), k.max());
    manifest.write(&dir.join("manifest.json"))?;

    let again = RunManifest::read(&dir.join("manifest.json"))?;
    println!("manifest lists {} outputs, {} missing", again.outputs.len(), again.missing_outputs().len());
    println!("written to {}", dir.display());
    Ok(())
}
