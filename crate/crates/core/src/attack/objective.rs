use crate::ensemble::{LeafId, LeafTuple, TreeEnsemble, TreeId};
use crate::fixed::Fixed;

/// Two-class reduction of the untargeted attack.
///
/// The search works on the trees of the victim class and of one adversarial
/// class only, with score `margin(adversary) - margin(victim)`. For binary
/// models the "classes" are the margin and zero, so every tree is active.
/// The score is adversarial when it is positive, or zero when the adversary
/// wins ties (smaller class index).
#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    victim: usize,
    adversary: usize,
    trees: Vec<TreeId>,
    positive: Vec<bool>,
    offset: Fixed,
    inclusive: bool,
}

impl Objective {
    /// `None` if the classes coincide or are out of range.
    pub fn new(ensemble: &TreeEnsemble, victim: usize, adversary: usize) -> Option<Objective> {
        let c = ensemble.num_classes();
        if victim == adversary || victim >= c || adversary >= c {
            return None;
        }
        let inclusive = adversary < victim;
        if ensemble.is_binary() {
            let up = adversary == 1;
            let base = Fixed::from_f64(ensemble.base_margin());
            Some(Objective {
                victim,
                adversary,
                trees: (0..ensemble.num_trees()).collect(),
                positive: vec![up; ensemble.num_trees()],
                offset: if up { base } else { -base },
                inclusive,
            })
        } else {
            let trees: Vec<TreeId> = (0..ensemble.num_trees())
                .filter(|&t| {
                    let k = ensemble.class_of_tree(t);
                    k == victim || k == adversary
                })
                .collect();
            let positive = trees
                .iter()
                .map(|&t| ensemble.class_of_tree(t) == adversary)
                .collect();
            Some(Objective {
                victim,
                adversary,
                trees,
                positive,
                offset: Fixed::ZERO,
                inclusive,
            })
        }
    }

    /// Objective against the class `x` is predicted as; `None` if that is
    /// the victim class.
    pub fn for_point(ensemble: &TreeEnsemble, victim: usize, x: &[f64]) -> Option<Objective> {
        Objective::new(ensemble, victim, ensemble.predict_class(x))
    }

    pub fn victim(&self) -> usize {
        self.victim
    }

    pub fn adversary(&self) -> usize {
        self.adversary
    }

    /// Active trees, ascending. Slot `k` of a tuple belongs to `trees()[k]`.
    pub fn trees(&self) -> &[TreeId] {
        &self.trees
    }

    #[inline]
    pub fn signed_value(&self, ensemble: &TreeEnsemble, slot: usize, leaf: LeafId) -> Fixed {
        let v = ensemble.leaf_value_fixed(leaf);
        if self.positive[slot] {
            v
        } else {
            -v
        }
    }

    pub fn score(&self, ensemble: &TreeEnsemble, leaves: &[LeafId]) -> Fixed {
        self.offset
            + leaves
                .iter()
                .enumerate()
                .map(|(k, &l)| self.signed_value(ensemble, k, l))
                .sum::<Fixed>()
    }

    #[inline]
    pub fn is_adversarial_score(&self, score: Fixed) -> bool {
        score.is_positive() || (self.inclusive && score == Fixed::ZERO)
    }

    pub fn is_adversarial(&self, ensemble: &TreeEnsemble, leaves: &[LeafId]) -> bool {
        self.is_adversarial_score(self.score(ensemble, leaves))
    }

    pub fn leaves_at(&self, ensemble: &TreeEnsemble, x: &[f64]) -> Vec<LeafId> {
        self.trees.iter().map(|&t| ensemble.leaf_of(t, x)).collect()
    }

    pub fn tuple_at(&self, ensemble: &TreeEnsemble, x: &[f64]) -> LeafTuple {
        LeafTuple::new(self.leaves_at(ensemble, x))
    }
}
