//! Regenerate the bundled files under `fixtures/`: the two pixel tables and
//! the golden preprocessing output for split 0 of the tiny table.

use std::fs::{self, File};
use std::path::Path;

use hybrid_svm::bench::{golden_config, golden_text, prepare_split};
use hybrid_svm::data::write_pixels;
use hybrid_svm::synthetic::BlobScene;
use hybrid_svm::Error;

fn main() -> hybrid_svm::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for (name, scene) in [
        ("tiny.csv", BlobScene::tiny()),
        ("blobs.csv", BlobScene::default()),
    ] {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_pixels(file, &scene.generate())?;
        println!("wrote {}", path.display());
    }
    let prepared = prepare_split(&BlobScene::tiny().generate(), &golden_config(), 0)?;
    let path = dir.join("tiny_split0.golden");
    fs::write(&path, golden_text(&prepared)).map_err(|e| Error::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}
