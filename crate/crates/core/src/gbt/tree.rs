/// A regression tree stored as a preorder node array; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        /// Non-missing values `<= threshold` go left.
        threshold: f64,
        /// Route taken by rows whose split feature is missing.
        default_left: bool,
        left: usize,
        right: usize,
        /// Realised gain of this split, regularisation included.
        gain: f64,
    },
    Leaf {
        weight: f64,
    },
}

impl Tree {
    pub fn leaf(weight: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { weight }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    /// Index of the leaf reached by a row.
    #[inline]
    pub fn leaf_index(&self, row: &[f64], missing: &[bool]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let go_left = if missing[feature] {
                        default_left
                    } else {
                        row[feature] <= threshold
                    };
                    i = if go_left { left } else { right };
                }
            }
        }
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64], missing: &[bool]) -> f64 {
        match self.nodes[self.leaf_index(row, missing)] {
            Node::Leaf { weight } => weight,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Checks preorder layout and child references.
    pub(crate) fn check_structure(&self, n_features: usize) -> Result<(), String> {
        fn walk(nodes: &[Node], i: usize, next: &mut usize, p: usize) -> Result<(), String> {
            if i >= nodes.len() {
                return Err(format!("node index {i} out of bounds"));
            }
            *next += 1;
            match nodes[i] {
                Node::Leaf { weight } => {
                    if !weight.is_finite() {
                        return Err(format!("leaf {i} has non-finite weight"));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if feature >= p {
                        return Err(format!("node {i} splits on feature {feature} of {p}"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i} has non-finite threshold"));
                    }
                    if left != *next {
                        return Err(format!("node {i}: left child {left} breaks preorder"));
                    }
                    walk(nodes, left, next, p)?;
                    if right != *next {
                        return Err(format!("node {i}: right child {right} breaks preorder"));
                    }
                    walk(nodes, right, next, p)?;
                }
            }
            Ok(())
        }
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut next = 0;
        walk(&self.nodes, 0, &mut next, n_features)?;
        if next != self.nodes.len() {
            return Err(format!("{} unreachable nodes", self.nodes.len() - next));
        }
        Ok(())
    }
}
