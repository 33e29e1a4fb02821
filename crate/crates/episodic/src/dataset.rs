use std::fs;
use std::path::Path;

use image::RgbImage;

use crate::{EpisodicError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Val, SplitKind::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassImages {
    pub name: String,
    pub images: Vec<RgbImage>,
}

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub classes: Vec<ClassImages>,
}

impl Split {
    pub fn num_images(&self) -> usize {
        self.classes.iter().map(|c| c.images.len()).sum()
    }
}

/// Square RGB images grouped by class, with disjoint class sets per split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Split,
    pub val: Split,
    pub test: Split,
    /// Side length shared by every image.
    pub size: usize,
}

impl Dataset {
    pub fn split(&self, kind: SplitKind) -> &Split {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }

    pub fn num_images(&self) -> usize {
        SplitKind::ALL.iter().map(|&k| self.split(k).num_images()).sum()
    }

    /// Reads `root/{train,val,test}/<class>/<image>.png`. Classes and images
    /// are sorted by name so the result does not depend on directory order.
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let mut size = None;
        let mut splits = Vec::new();
        for kind in SplitKind::ALL {
            let dir = root.join(kind.dir_name());
            let mut class_dirs: Vec<_> = fs::read_dir(&dir)
                .map_err(|e| EpisodicError::Dataset(format!("{}: {e}", dir.display())))?
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .filter(|e| e.path().is_dir())
                .collect();
            class_dirs.sort_by_key(|e| e.file_name());
            let mut classes = Vec::new();
            for class_dir in class_dirs {
                let mut files: Vec<_> = fs::read_dir(class_dir.path())?
                    .collect::<std::io::Result<Vec<_>>>()?
                    .into_iter()
                    .map(|e| e.path())
                    .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
                    .collect();
                files.sort();
                let mut images = Vec::with_capacity(files.len());
                for file in files {
                    let img = image::open(&file)?.to_rgb8();
                    let (w, h) = img.dimensions();
                    if w != h || size.is_some_and(|s| s != w as usize) {
                        return Err(EpisodicError::Dataset(format!(
                            "{} is {w}×{h}; every image must be square and of one size",
                            file.display()
                        )));
                    }
                    size = Some(w as usize);
                    images.push(img);
                }
                classes.push(ClassImages { name: class_dir.file_name().to_string_lossy().into_owned(), images });
            }
            splits.push(Split { classes });
        }
        let size = size.ok_or_else(|| EpisodicError::Dataset(format!("no images under {}", root.display())))?;
        let [train, val, test]: [Split; 3] = splits.try_into().expect("three splits");
        Ok(Dataset { train, val, test, size })
    }

    pub fn save(&self, root: impl AsRef<Path>) -> Result<()> {
        for kind in SplitKind::ALL {
            for class in &self.split(kind).classes {
                let dir = root.as_ref().join(kind.dir_name()).join(&class.name);
                fs::create_dir_all(&dir)?;
                for (i, img) in class.images.iter().enumerate() {
                    img.save(dir.join(format!("{i:04}.png")))?;
                }
            }
        }
        Ok(())
    }
}
